"""Log-distance propagation with a tissue penetration term, CCA and collisions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .common import ConfigError, Placement

CAPTURE_MARGIN_DB = 10.0


@dataclass(frozen=True)
class ChannelParams:
    pl0_db: float = 40.0
    d0_m: float = 0.1
    exp_onbody: float = 3.5
    exp_inbody: float = 6.0
    tissue_loss_db: float = 35.0
    cca_threshold_dbm: float = -85.0
    rx_sensitivity_dbm: float = -95.0
    noise_floor_dbm: float = -100.0
    capture_margin_db: float = CAPTURE_MARGIN_DB
    # Independent per-frame erasure probability on top of the deterministic budget.
    loss_prob: float = 0.0

    def __post_init__(self):
        if self.exp_onbody <= 0 or self.exp_inbody <= 0:
            raise ConfigError("path-loss exponents must be > 0")
        if self.d0_m <= 0:
            raise ConfigError("d0_m must be > 0")
        for name in ("pl0_db", "cca_threshold_dbm", "rx_sensitivity_dbm", "noise_floor_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not 0.0 <= self.loss_prob < 1.0:
            raise ConfigError("loss_prob must lie in [0, 1)")


@dataclass(frozen=True)
class LinkGeometry:
    distance_m: float
    tx_placement: Placement = Placement.ON_BODY
    rx_placement: Placement = Placement.ON_BODY
    implant_depth_m: float = 0.0

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"distance_m must be > 0, got {self.distance_m}")
        if self.implant_depth_m < 0:
            raise ValueError("implant_depth_m must be >= 0")
        if self.implant_depth_m > self.distance_m:
            raise ValueError("implant_depth_m cannot exceed distance_m")

    @property
    def surface_crossings(self) -> int:
        return (self.tx_placement is Placement.IN_BODY) + (self.rx_placement is Placement.IN_BODY)


class CcaVerdict(Enum):
    IDLE = "idle"
    BUSY = "busy"


@dataclass(frozen=True)
class CcaResult:
    verdict: CcaVerdict
    sensed_power_dbm: float

    @property
    def busy(self) -> bool:
        return self.verdict is CcaVerdict.BUSY


class ReceptionStatus(Enum):
    DELIVERED = "delivered"
    LOST_BELOW_SENSITIVITY = "below_sensitivity"
    LOST_COLLISION = "collision"


@dataclass(frozen=True)
class ReceptionOutcome:
    status: ReceptionStatus
    rx_power_dbm: float


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw) if mw > 0 else -math.inf


def path_loss_db(geom: LinkGeometry, params: ChannelParams) -> float:
    if not geom.distance_m > 0:
        raise ValueError("distance must be positive")
    loss = params.pl0_db + 10.0 * params.exp_onbody * math.log10(geom.distance_m / params.d0_m)
    crossings = geom.surface_crossings
    if crossings:
        per_crossing = params.tissue_loss_db + 10.0 * params.exp_inbody * math.log10(
            1.0 + geom.implant_depth_m / params.d0_m
        )
        loss += crossings * per_crossing
    return loss


def rx_power_dbm(tx_power_dbm: float, geom: LinkGeometry, params: ChannelParams) -> float:
    return tx_power_dbm - path_loss_db(geom, params)


def cca_from_rx_powers(rx_powers_dbm: Iterable[float], params: ChannelParams) -> CcaResult:
    total = dbm_to_mw(params.noise_floor_dbm)
    for p in rx_powers_dbm:
        total += dbm_to_mw(p)
    sensed = mw_to_dbm(total)
    verdict = CcaVerdict.BUSY if sensed >= params.cca_threshold_dbm else CcaVerdict.IDLE
    return CcaResult(verdict, sensed)


def assess_channel(
    active_transmissions: Iterable[tuple[float, LinkGeometry]], params: ChannelParams
) -> CcaResult:
    """CCA at one listener.

    ``active_transmissions`` holds ``(tx_power_dbm, geometry_to_listener)``
    pairs; received powers add in milliwatts on top of the noise floor.
    """
    return cca_from_rx_powers((rx_power_dbm(p, g, params) for p, g in active_transmissions), params)


def resolve_reception(
    intended_rx_dbm: float, overlapping_rx_dbm: Iterable[float], params: ChannelParams
) -> ReceptionOutcome:
    if intended_rx_dbm < params.rx_sensitivity_dbm:
        return ReceptionOutcome(ReceptionStatus.LOST_BELOW_SENSITIVITY, intended_rx_dbm)
    floor = intended_rx_dbm - params.capture_margin_db
    for p in overlapping_rx_dbm:
        if p >= floor:
            return ReceptionOutcome(ReceptionStatus.LOST_COLLISION, intended_rx_dbm)
    return ReceptionOutcome(ReceptionStatus.DELIVERED, intended_rx_dbm)


class Transmission:
    __slots__ = ("src", "dst", "start", "end", "kind", "packet", "rx_counted")

    def __init__(self, src: int, dst: int, start: int, end: int, kind: str, packet=None):
        self.src = src
        self.dst = dst
        self.start = start
        self.end = end
        self.kind = kind
        self.packet = packet
        self.rx_counted = False

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and self.end > start


class Medium:
    """Shared data channel: remembers recent transmissions for overlap queries."""

    def __init__(self, keep_us: int):
        self.keep_us = keep_us
        self.recent: list[Transmission] = []

    def add(self, tx: Transmission) -> None:
        self.recent.append(tx)
        if len(self.recent) > 32:
            horizon = tx.start - self.keep_us
            self.recent = [t for t in self.recent if t.end > horizon]

    def overlapping(self, start: int, end: int, exclude: Transmission | None = None) -> list[Transmission]:
        return [t for t in self.recent if t is not exclude and t.start < end and t.end > start]
