"""Wake-up radio signalling for emergency and on-demand traffic."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .common import ConfigError


class WakeupMode(Enum):
    BROADCAST = "broadcast"
    ADDRESSED = "addressed"


class Purpose(Enum):
    EMERGENCY = "emergency"
    ONDEMAND_CONTINUOUS = "ondemand_continuous"
    ONDEMAND_NONCONTINUOUS = "ondemand_noncontinuous"


@dataclass(frozen=True)
class WakeupSignal:
    origin: str
    target: str
    mode: WakeupMode
    purpose: Purpose
    duration_us: int = 1_000
    channel: int | None = None
    count: int = 1

    def __post_init__(self):
        if self.duration_us <= 0:
            raise ConfigError("wake-up signal duration must be > 0")
        if self.purpose is Purpose.ONDEMAND_NONCONTINUOUS and self.count < 1:
            raise ConfigError("non-continuous on-demand requests need count >= 1")
        if self.mode is WakeupMode.ADDRESSED and self.channel is None:
            raise ConfigError("frequency-addressed wake-up signals need a channel")


@dataclass(frozen=True)
class WakeupConfig:
    enabled: bool = True
    mode: WakeupMode = WakeupMode.ADDRESSED
    signal_us: int = 1_000
    # Receive time a node burns before realising a wake-up was not for it.
    false_wake_listen_us: int = 2_000

    def __post_init__(self):
        if self.signal_us <= 0:
            raise ConfigError("signal_us must be > 0")
        if self.false_wake_listen_us < 0:
            raise ConfigError("false_wake_listen_us must be >= 0")


@dataclass(frozen=True)
class EmergencyConfig:
    threshold: float = 3.0
    deadline_us: int = 1_000_000
    start: float = 0.0
    drift: float = 0.0
    step_sigma: float = 1.0
    lower: float = -10.0
    upper: float = 10.0
    sample_us: int = 100_000
    # Nodes running the reading process (empty: none).
    nodes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.deadline_us <= 0:
            raise ConfigError("emergency deadline_us must be > 0")
        if self.sample_us <= 0:
            raise ConfigError("emergency sample_us must be > 0")
        if self.step_sigma < 0 or self.lower > self.upper:
            raise ConfigError("emergency walk needs step_sigma >= 0 and lower <= upper")


@dataclass(frozen=True)
class EmergencyEvent:
    node: str
    at_us: int
    reading: float
    signal: WakeupSignal


class EmergencyDetector:
    """Strict threshold crossing with suppression until the emergency resolves."""

    def __init__(self, node: str, cfg: EmergencyConfig, wakeup: WakeupConfig | None = None, coordinator_channel: int = 0):
        self.node = node
        self.cfg = cfg
        self.wakeup = wakeup or WakeupConfig()
        self.coordinator_channel = coordinator_channel
        self.unresolved = False
        self.triggers = 0

    def observe(self, reading: float, t: int) -> EmergencyEvent | None:
        if self.unresolved or not reading > self.cfg.threshold:
            return None
        self.unresolved = True
        self.triggers += 1
        signal = WakeupSignal(
            origin=self.node,
            target="coord",
            mode=self.wakeup.mode,
            purpose=Purpose.EMERGENCY,
            duration_us=self.wakeup.signal_us,
            channel=self.coordinator_channel if self.wakeup.mode is WakeupMode.ADDRESSED else None,
        )
        return EmergencyEvent(self.node, t, reading, signal)

    def resolve(self) -> None:
        self.unresolved = False


def emergency_trigger(detector: EmergencyDetector, reading: float, t: int) -> EmergencyEvent | None:
    return detector.observe(reading, t)


@dataclass(frozen=True)
class WakeupDelivery:
    woken: frozenset[str]
    intended: frozenset[str]

    @property
    def false_wakeups(self) -> int:
        return len(self.woken - self.intended)

    @property
    def delivered(self) -> bool:
        return bool(self.woken & self.intended)


def deliver_wakeup(signal: WakeupSignal, population: Mapping[str, int]) -> WakeupDelivery:
    """Wake nodes of ``population`` (node -> wake-up receive channel).

    Broadcast wakes every in-range node except the sender; addressed mode
    wakes exactly the nodes listening on ``signal.channel``.
    """
    intended = frozenset({signal.target})
    if signal.mode is WakeupMode.BROADCAST:
        woken = frozenset(n for n in population if n != signal.origin)
    else:
        woken = frozenset(n for n, ch in population.items() if ch == signal.channel and n != signal.origin)
    return WakeupDelivery(woken, intended)


class SessionKind(Enum):
    CONTINUOUS = "continuous"
    NONCONTINUOUS = "noncontinuous"


class SessionState(Enum):
    REQUESTED = "requested"
    STREAMING = "streaming"
    DONE = "done"


class SessionError(RuntimeError):
    pass


@dataclass
class OnDemandSession:
    target: str
    kind: SessionKind
    count: int = 0
    state: SessionState = SessionState.REQUESTED
    delivered: int = 0
    started_at: int | None = None
    ended_at: int | None = None

    def start(self, t: int) -> None:
        self.state = SessionState.STREAMING
        self.started_at = t

    def on_delivery(self, t: int) -> bool:
        """Count a unique delivery; returns True if that closed the session."""
        if self.state is not SessionState.STREAMING:
            return False
        self.delivered += 1
        if self.kind is SessionKind.NONCONTINUOUS and self.delivered >= self.count:
            self.state = SessionState.DONE
            self.ended_at = t
            return True
        return False

    def stop(self, t: int) -> None:
        if self.state is not SessionState.DONE:
            self.state = SessionState.DONE
            self.ended_at = t

    @property
    def active(self) -> bool:
        return self.state is not SessionState.DONE


class SessionTable:
    """At most one live session per node."""

    def __init__(self, registered: set[str] | frozenset[str]):
        self.registered = frozenset(registered)
        self.sessions: dict[str, OnDemandSession] = {}
        self.history: list[OnDemandSession] = []
        self.rejected = 0

    def on_demand_request(self, target: str, kind: SessionKind, count: int = 1) -> OnDemandSession:
        if target not in self.registered:
            raise SessionError(f"on-demand request to unknown node {target!r}")
        live = self.sessions.get(target)
        if live is not None and live.active:
            self.rejected += 1
            raise SessionError(f"node {target!r} already has an active {live.kind.value} session")
        if kind is SessionKind.NONCONTINUOUS and count < 1:
            raise SessionError("non-continuous sessions need count >= 1")
        session = OnDemandSession(target, kind, count)
        self.sessions[target] = session
        self.history.append(session)
        return session

    def get(self, target: str) -> OnDemandSession | None:
        s = self.sessions.get(target)
        return s if s is not None and s.active else None
