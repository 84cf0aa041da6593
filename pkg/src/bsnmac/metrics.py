"""Per-node radio-state energy ledger and run-level metrics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .common import ConfigError
from .traffic import Packet, TrafficClass


class RadioState(Enum):
    TRANSMIT = "transmit"
    RECEIVE = "receive"
    CCA_SENSE = "cca_sense"
    IDLE_LISTEN = "idle_listen"
    SLEEP = "sleep"
    WAKEUP_LISTEN = "wakeup_listen"


SLEEPING = frozenset({RadioState.SLEEP, RadioState.WAKEUP_LISTEN})
ACTIVE = tuple(s for s in RadioState if s not in SLEEPING)


@dataclass(frozen=True)
class PowerProfile:
    transmit_mw: float = 36.0
    receive_mw: float = 40.0
    cca_sense_mw: float = 40.0
    idle_listen_mw: float = 20.0
    wakeup_listen_mw: float = 0.1
    sleep_mw: float = 0.001

    def __post_init__(self):
        active = (self.transmit_mw, self.receive_mw, self.cca_sense_mw, self.idle_listen_mw)
        if not (self.sleep_mw < self.wakeup_listen_mw < min(active)):
            raise ConfigError("power profile must satisfy sleep < wakeup_listen < every active state")

    def power(self, state: RadioState) -> float:
        return getattr(self, f"{state.value}_mw")


class LedgerError(RuntimeError):
    pass


class EnergyLedger:
    """Tiles each node's timeline into radio-state intervals."""

    def __init__(self, nodes: Sequence[str], power: PowerProfile, t0: int = 0, initial: RadioState = RadioState.SLEEP):
        self.power = power
        self.nodes = list(nodes)
        self.state = {n: initial for n in nodes}
        self.since = {n: t0 for n in nodes}
        self.durations = {n: {s: 0 for s in RadioState} for n in nodes}
        self.t0 = t0
        self.closed_at: int | None = None

    def accrue_state(self, node: str, new_state: RadioState, t: int) -> None:
        since = self.since[node]
        if t < since:
            raise LedgerError(f"ledger corruption: {node} transition at t={t} precedes t={since}")
        self.durations[node][self.state[node]] += t - since
        self.state[node] = new_state
        self.since[node] = t

    def close(self, t: int) -> None:
        for n in self.nodes:
            self.accrue_state(n, self.state[n], t)
        self.closed_at = t

    def total_time(self, node: str) -> int:
        return sum(self.durations[node].values())

    def energy_mj(self, node: str) -> float:
        d = self.durations[node]
        return sum(self.power.power(s) * us for s, us in d.items()) * 1e-6

    def sleep_time(self, node: str) -> int:
        d = self.durations[node]
        return d[RadioState.SLEEP] + d[RadioState.WAKEUP_LISTEN]

    def sleep_ratio(self, node: str) -> float:
        total = self.total_time(node)
        return self.sleep_time(node) / total if total else 1.0


DROP_REASONS = ("overflow", "access", "collision", "link")
CLASS_ORDER = ("all",) + tuple(c.value for c in TrafficClass)


@dataclass
class ClassStats:
    generated: int = 0
    delivered: int = 0
    drop_overflow: int = 0
    drop_access: int = 0
    drop_collision: int = 0
    drop_link: int = 0
    # Still buffered or in flight when the run ended.
    pending: int = 0
    pdr: float | None = None
    lat_mean_us: float | None = None
    lat_median_us: float | None = None
    lat_p95_us: float | None = None
    lat_max_us: int | None = None

    @property
    def dropped(self) -> int:
        return self.drop_overflow + self.drop_access + self.drop_collision + self.drop_link


@dataclass
class MetricsReport:
    scenario: str
    mac: str
    seed: int
    duration_us: int
    classes: dict[str, ClassStats]
    energy_mj: dict[str, float]
    sleep_ratio: dict[str, float]
    coord_sleep_ratio: float
    false_wakeups: int = 0
    deadline_misses: int = 0
    emergencies: int = 0
    coordinator_collisions: int = 0
    gts_denied: int = 0
    ondemand_rejected: int = 0
    events: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def energy_mj_total(self) -> float:
        return sum(self.energy_mj.values())

    def to_json(self) -> str:
        doc = asdict(self)
        doc["energy_mj_total"] = self.energy_mj_total
        return json.dumps(doc, indent=2, sort_keys=True)


CSV_COLUMNS = (
    "scenario", "mac", "seed", "class", "generated", "delivered", "drop_overflow", "drop_access",
    "drop_collision", "drop_link", "pdr", "lat_mean_us", "lat_p95_us", "lat_max_us", "energy_mj_total",
    "coord_sleep_ratio", "false_wakeups", "deadline_misses",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def csv_rows(report: MetricsReport, classes: Iterable[str] | None = None) -> list[list[str]]:
    wanted = list(classes) if classes is not None else [
        c for c in CLASS_ORDER if c == "all" or report.classes[c].generated > 0
    ]
    rows = []
    for c in wanted:
        s = report.classes[c]
        rows.append([_fmt(v) for v in (
            report.scenario, report.mac, report.seed, c, s.generated, s.delivered, s.drop_overflow,
            s.drop_access, s.drop_collision, s.drop_link, s.pdr, s.lat_mean_us, s.lat_p95_us, s.lat_max_us,
            report.energy_mj_total, report.coord_sleep_ratio, report.false_wakeups, report.deadline_misses,
        )])
    return rows


def to_csv(reports: Iterable[MetricsReport], classes: Iterable[str] | None = None, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerows(csv_rows(r, classes))
    return buf.getvalue()


def class_stats(packets: Sequence[Packet]) -> ClassStats:
    s = ClassStats(generated=len(packets))
    lat = []
    for p in packets:
        fate = p.fate
        if fate == "delivered":
            s.delivered += 1
            lat.append(p.delivered_at - p.created_at)
        elif fate is None:
            s.pending += 1
        else:
            setattr(s, f"drop_{fate}", getattr(s, f"drop_{fate}") + 1)
    if s.generated:
        s.pdr = s.delivered / s.generated
    if lat:
        arr = np.asarray(lat, dtype=float)
        s.lat_mean_us = float(arr.mean())
        s.lat_median_us = float(np.median(arr))
        s.lat_p95_us = float(np.percentile(arr, 95))
        s.lat_max_us = int(arr.max())
    return s


def summarize(
    ledger: EnergyLedger,
    packets: Sequence[Packet],
    *,
    scenario: str,
    mac: str,
    seed: int,
    duration_us: int,
    coordinator: str,
    deadline_us: int | None = None,
    end_us: int | None = None,
    **counters,
) -> MetricsReport:
    """Build the run report. Undelivered packets never enter latency statistics."""
    by_class: dict[str, list[Packet]] = {c.value: [] for c in TrafficClass}
    for p in packets:
        by_class[p.cls.value].append(p)
    classes = {"all": class_stats(packets)}
    classes.update({c: class_stats(ps) for c, ps in by_class.items()})
    misses = 0
    if deadline_us is not None:
        end = duration_us if end_us is None else end_us
        for p in by_class[TrafficClass.EMERGENCY.value]:
            if p.delivered_at is not None:
                misses += p.delivered_at - p.created_at >= deadline_us
            elif p.fate is not None or end - p.created_at >= deadline_us:
                misses += 1
    return MetricsReport(
        scenario=scenario,
        mac=mac,
        seed=seed,
        duration_us=duration_us,
        classes=classes,
        energy_mj={n: ledger.energy_mj(n) for n in ledger.nodes},
        sleep_ratio={n: ledger.sleep_ratio(n) for n in ledger.nodes},
        coord_sleep_ratio=ledger.sleep_ratio(coordinator),
        deadline_misses=misses,
        emergencies=len(by_class[TrafficClass.EMERGENCY.value]),
        **counters,
    )
