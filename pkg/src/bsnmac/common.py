"""Small shared vocabulary used by every MAC module."""

from __future__ import annotations

from enum import Enum

COORDINATOR = "coord"


class MacAction(Enum):
    SLEEP = "sleep"
    TRANSMIT = "transmit"
    RECEIVE = "receive"
    LISTEN = "listen"
    BACKOFF = "backoff"
    FAIL = "fail"


class Placement(Enum):
    IN_BODY = "inbody"
    ON_BODY = "onbody"


class ConfigError(ValueError):
    """A configuration value violates one of its invariants."""
