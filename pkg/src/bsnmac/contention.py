"""Slotted CSMA/CA with class-dependent initial back-off windows, and the
beacon-enabled superframe's guaranteed-time-slot bookkeeping."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .channel import CcaResult
from .common import ConfigError, MacAction

CRITICAL = "critical"
NONCRITICAL = "noncritical"


@dataclass(frozen=True)
class BackoffConfig:
    w0_critical: int = 8
    w0_noncritical: int = 32
    # Window used by plain (unprioritized) CSMA/CA for every class.
    w0_standard: int = 8
    max_doublings: int = 5
    max_attempts: int = 5
    backoff_slot_us: int = 320
    cca_us: int = 128

    def __post_init__(self):
        if self.w0_critical < 1 or self.w0_noncritical < 1 or self.w0_standard < 1:
            raise ConfigError("initial back-off windows must be >= 1")
        if self.w0_critical > self.w0_noncritical:
            raise ConfigError(
                f"w0_critical={self.w0_critical} exceeds w0_noncritical={self.w0_noncritical}; "
                "critical traffic must not get the larger window (W_0^α ≤ W_0^β)"
            )
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.max_doublings < 0:
            raise ConfigError("max_doublings must be >= 0")
        if self.backoff_slot_us <= 0 or self.cca_us <= 0:
            raise ConfigError("backoff_slot_us and cca_us must be > 0")


@dataclass(frozen=True)
class SuperframeConfig:
    beacon_interval_us: int = 250_000
    cap_us: int = 150_000
    gts_slots: int = 2
    gts_slot_us: int = 20_000
    gts_expiry_frames: int = 2
    beacon_bits: int = 200

    def __post_init__(self):
        if self.gts_slots < 0:
            raise ConfigError("gts_slots must be >= 0")
        if self.gts_expiry_frames < 1:
            raise ConfigError("gts_expiry_frames must be >= 1")
        if self.cap_us + self.gts_slots * self.gts_slot_us > self.beacon_interval_us:
            raise ConfigError("cap_us + gts_slots * gts_slot_us must fit in beacon_interval_us")
        if self.cap_us <= 0 or self.beacon_interval_us <= 0:
            raise ConfigError("superframe durations must be > 0")


def initial_window(cls: str, cfg: BackoffConfig) -> int:
    return cfg.w0_critical if cls == CRITICAL else cfg.w0_noncritical


@dataclass
class CsmaState:
    w0: int
    max_doublings: int
    max_attempts: int
    attempts: int = 0
    doublings: int = 0
    pending_slots: int = 0
    cls: str = NONCRITICAL

    @classmethod
    def fresh(cls, traffic_class: str, cfg: BackoffConfig, prioritized: bool = True) -> "CsmaState":
        w0 = initial_window(traffic_class, cfg) if prioritized else cfg.w0_standard
        return cls(w0, cfg.max_doublings, cfg.max_attempts, cls=traffic_class)

    @property
    def window(self) -> int:
        return self.w0 << min(self.doublings, self.max_doublings)

    def reset(self) -> None:
        self.attempts = 0
        self.doublings = 0
        self.pending_slots = 0


def draw_backoff(window: int, rng: random.Random) -> int:
    return rng.randrange(window)


def csma_step(state: CsmaState, cca: CcaResult | None, rng: random.Random) -> MacAction:
    """Advance one CSMA/CA decision.

    ``cca=None`` starts an access attempt (draw a back-off); after the
    back-off the caller samples the channel and passes the verdict back.
    BACKOFF means "wait ``state.pending_slots`` slots then CCA".
    """
    if cca is None:
        state.pending_slots = draw_backoff(state.window, rng)
        return MacAction.BACKOFF
    if not cca.busy:
        state.pending_slots = 0
        return MacAction.TRANSMIT
    state.attempts += 1
    if state.attempts >= state.max_attempts:
        return MacAction.FAIL
    state.doublings = min(state.doublings + 1, state.max_doublings)
    state.pending_slots = draw_backoff(state.window, rng)
    return MacAction.BACKOFF


class GtsAllocator:
    """First-come-first-served GTS pool with idle expiry.

    Superframe ``k`` starts at beacon ``k``. An owner that leaves its slot
    unused for ``expiry_frames`` consecutive superframes loses it at the
    following beacon.
    """

    def __init__(self, slot_count: int, expiry_frames: int):
        self.slot_count = slot_count
        self.expiry_frames = expiry_frames
        self.slots: list[str | None] = [None] * slot_count
        self.idle: dict[str, int] = {}
        self.denied = 0
        self.revocations: list[tuple[int, str]] = []
        self.beacons = 0

    def owner_slot(self, node: str) -> int | None:
        try:
            return self.slots.index(node)
        except ValueError:
            return None

    def request(self, node: str) -> int | None:
        slot = self.owner_slot(node)
        if slot is not None:
            return slot
        for i, owner in enumerate(self.slots):
            if owner is None:
                self.slots[i] = node
                self.idle[node] = 0
                return i
        self.denied += 1
        return None

    def end_superframe(self, used: Iterable[str]) -> None:
        used = set(used)
        for owner in self.slots:
            if owner is None:
                continue
            self.idle[owner] = 0 if owner in used else self.idle[owner] + 1

    def beacon(self) -> list[str]:
        """Start the next superframe; returns owners revoked at this beacon."""
        index = self.beacons
        self.beacons += 1
        revoked = []
        for i, owner in enumerate(self.slots):
            if owner is not None and self.idle[owner] >= self.expiry_frames:
                self.slots[i] = None
                del self.idle[owner]
                revoked.append(owner)
                self.revocations.append((index, owner))
        return revoked

    def allocation(self) -> dict[str, int]:
        return {owner: i for i, owner in enumerate(self.slots) if owner is not None}


@dataclass
class GtsOutcome:
    allocation: dict[str, int]
    denied: list[str]
    revoked_at: dict[str, int] = field(default_factory=dict)


def gts_manage(
    requests: Sequence[str], usage_history: Sequence[Iterable[str]], cfg: SuperframeConfig
) -> GtsOutcome:
    """Replay requests at beacon 0 and per-superframe usage sets.

    ``revoked_at`` maps an owner to the beacon index at which it lost its slot.
    """
    alloc = GtsAllocator(cfg.gts_slots, cfg.gts_expiry_frames)
    alloc.beacon()
    denied = [r for r in requests if alloc.request(r) is None]
    for used in usage_history:
        alloc.end_superframe(used)
        alloc.beacon()
    return GtsOutcome(alloc.allocation(), denied, {node: k for k, node in alloc.revocations})
