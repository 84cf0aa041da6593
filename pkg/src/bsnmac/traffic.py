"""Traffic classes, packets and arrival/reading generators."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

from .common import ConfigError
from .ptdma import WakeupPattern
from .wakeup import EmergencyConfig

MIN_DATA_RATE_BPS = 10_000
MAX_DATA_RATE_BPS = 10_000_000


class TrafficClass(Enum):
    NORMAL = "normal"
    EMERGENCY = "emergency"
    ONDEMAND_CONTINUOUS = "ondemand_continuous"
    ONDEMAND_NONCONTINUOUS = "ondemand_noncontinuous"


class ClassificationError(ValueError):
    pass


@dataclass(frozen=True)
class PacketDescriptor:
    origin: str  # "periodic" | "threshold" | "request"
    request_kind: str | None = None  # "continuous" | "noncontinuous"


def classify(meta: PacketDescriptor) -> TrafficClass:
    if meta.origin == "periodic":
        return TrafficClass.NORMAL
    if meta.origin == "threshold":
        return TrafficClass.EMERGENCY
    if meta.origin == "request":
        if meta.request_kind == "continuous":
            return TrafficClass.ONDEMAND_CONTINUOUS
        if meta.request_kind == "noncontinuous":
            return TrafficClass.ONDEMAND_NONCONTINUOUS
    raise ClassificationError(f"cannot classify packet from origin {meta.origin!r} ({meta.request_kind!r})")


class Packet:
    __slots__ = ("id", "source", "destination", "cls", "size_bits", "created_at", "delivered_at", "attempts", "fate")

    def __init__(self, id: int, source: str, destination: str, cls: TrafficClass, size_bits: int, created_at: int):
        self.id = id
        self.source = source
        self.destination = destination
        self.cls = cls
        self.size_bits = size_bits
        self.created_at = created_at
        self.delivered_at: int | None = None
        self.attempts = 0
        # None while queued/in flight; "delivered" or a drop reason once settled.
        self.fate: str | None = None

    @property
    def latency(self) -> int | None:
        return None if self.delivered_at is None else self.delivered_at - self.created_at

    def __repr__(self) -> str:
        return f"Packet({self.id}, {self.source}, {self.cls.value}, t={self.created_at}, fate={self.fate})"


@dataclass(frozen=True)
class TrafficConfig:
    payload_bits: int = 1016
    arrivals: str = "pinned"
    # Packets per pattern-active frame (pattern-TDMA).
    rate: float = 1.0
    # Packets per second; when > 0 it overrides ``rate``.
    rate_hz: float = 0.0
    saturated: bool = False
    queue_capacity: int = 64

    def __post_init__(self):
        if self.payload_bits <= 0:
            raise ConfigError("payload_bits must be > 0")
        if self.arrivals not in ("pinned", "free"):
            raise ConfigError(f"arrivals must be 'pinned' or 'free', got {self.arrivals!r}")
        if self.rate < 0 or self.rate_hz < 0:
            raise ConfigError("traffic rates must be non-negative")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")


def check_data_rate(bitrate_bps: float) -> None:
    if not MIN_DATA_RATE_BPS <= bitrate_bps <= MAX_DATA_RATE_BPS:
        raise ConfigError(
            f"radio bitrate {bitrate_bps} b/s outside the supported {MIN_DATA_RATE_BPS}..{MAX_DATA_RATE_BPS} b/s envelope"
        )


def _next_active_frame_start(t: int, active: list[int], length: int, frame_us: int) -> int:
    frame = -(-t // frame_us)  # first frame starting at or after t
    cycle, f = divmod(frame, length)
    for a in active:
        if a >= f:
            return (cycle * length + a) * frame_us
    return ((cycle + 1) * length + active[0]) * frame_us


def _poisson(rate_hz: float, horizon: int, rng: random.Random) -> list[int]:
    out = []
    t = 0.0
    mean_gap = 1e6 / rate_hz
    while True:
        t += rng.expovariate(1.0) * mean_gap
        if t >= horizon:
            return out
        out.append(int(t))


def generate_normal(
    profile: TrafficConfig,
    pattern: WakeupPattern | None,
    horizon: int,
    rng: random.Random,
    frame_us: int = 0,
) -> list[int]:
    """Arrival times (µs) of normal packets over ``[0, horizon)``.

    Pinned arrivals land on the start of a pattern-active frame, so every
    packet is eligible in its node's next slot. Poisson arrivals (``rate_hz``)
    in pinned mode are moved forward to the next active frame; with an
    all-zero pattern they stay where they fall and simply never leave the
    buffer.
    """
    if horizon <= 0:
        return []
    active = pattern.active_frames if pattern is not None else []
    if profile.rate_hz > 0:
        times = _poisson(profile.rate_hz, horizon, rng)
        if profile.arrivals == "pinned" and active and frame_us > 0:
            times = [_next_active_frame_start(t, active, len(pattern), frame_us) for t in times]
        return sorted(times)
    if profile.rate <= 0 or pattern is None or frame_us <= 0 or not active:
        return []
    whole = math.floor(profile.rate)
    frac = profile.rate - whole
    if profile.arrivals == "free":
        equivalent_hz = profile.rate * len(active) / (len(pattern) * frame_us) * 1e6
        return _poisson(equivalent_hz, horizon, rng)
    times = []
    n_frames = -(-horizon // frame_us)
    L = len(pattern)
    for frame in range(n_frames):
        if not pattern[frame % L]:
            continue
        count = whole + (1 if frac and rng.random() < frac else 0)
        times.extend([frame * frame_us] * count)
    return times


def generate_emergency(cfg: EmergencyConfig, horizon: int, rng: random.Random) -> list[tuple[int, float]]:
    """Bounded random-walk readings sampled every ``cfg.sample_us``."""
    out = []
    x = cfg.start
    t = 0
    while t < horizon:
        x = min(cfg.upper, max(cfg.lower, x + cfg.drift + cfg.step_sigma * rng.gauss(0.0, 1.0)))
        out.append((t, x))
        t += cfg.sample_us
    return out
