"""Scenario files: an INI-style, line-oriented description of one experiment.

Grammar (see README for the full key list)::

    [scenario]          name, mac, duration_us, seeds, event_cap, coordinator_channel
    [channel] [radio] [ptdma] [csma] [superframe] [smac] [pbtdma]
    [wakeup] [emergency] [traffic] [ondemand] [energy]
    [node.<id>]         placement, depth_m, distance_m, angle_deg, pattern, slot,
                        wakeup_channel, class, tx_power_dbm, rate, rate_hz, gts

Lists are comma separated; ``seeds`` also accepts ``a..b``. Every key is
optional; omitted keys take the documented defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any

from .baselines import DutyCycleConfig, PreambleSlotConfig
from .channel import ChannelParams, LinkGeometry
from .common import COORDINATOR, ConfigError, Placement
from .contention import CRITICAL, NONCRITICAL, BackoffConfig, SuperframeConfig
from .engine import DEFAULT_EVENT_CAP
from .metrics import PowerProfile
from .ptdma import PatternUpdate, TdmaParams, WakeupPattern, WakeupTable
from .traffic import TrafficConfig, check_data_rate
from .wakeup import EmergencyConfig, SessionKind, WakeupConfig, WakeupMode

MACS = ("ptdma", "csma", "csma-prio", "smac", "pbtdma", "beacon154")


class ScenarioSyntaxError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScenarioError(ValueError):
    def __init__(self, section: str, message: str):
        super().__init__(f"[{section}] {message}")
        self.section = section


@dataclass(frozen=True)
class RadioConfig:
    bitrate_bps: int = 250_000
    tx_power_dbm: float = 0.0
    turnaround_us: int = 192
    ack_bits: int = 88
    ack_timeout_us: int = 1_000
    max_retries: int = 3

    def __post_init__(self):
        check_data_rate(self.bitrate_bps)
        if self.ack_timeout_us <= self.turnaround_us:
            raise ConfigError("ack_timeout_us must exceed turnaround_us")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    def airtime_us(self, bits: int) -> int:
        return -(-bits * 1_000_000 // self.bitrate_bps)


@dataclass(frozen=True)
class OnDemandRequest:
    at_us: int
    target: str
    kind: SessionKind
    # Packet count for non-continuous sessions, stop time (µs) for continuous ones.
    amount: int


@dataclass(frozen=True)
class OnDemandConfig:
    requests: tuple[OnDemandRequest, ...] = ()
    stream_interval_us: int = 30_000

    def __post_init__(self):
        if self.stream_interval_us <= 0:
            raise ConfigError("stream_interval_us must be > 0")


@dataclass(frozen=True)
class NodeSpec:
    id: str
    placement: Placement = Placement.ON_BODY
    depth_m: float = 0.0
    distance_m: float = 0.5
    angle_deg: float | None = None
    pattern: str | None = None
    slot: int | None = None
    wakeup_channel: int | None = None
    cls: str = NONCRITICAL
    tx_power_dbm: float | None = None
    rate: float | None = None
    rate_hz: float | None = None
    gts: bool = False


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    mac: str = "ptdma"
    duration_us: int = 1_000_000
    seeds: tuple[int, ...] = (1,)
    event_cap: int = DEFAULT_EVENT_CAP
    coordinator_channel: int = 0
    nodes: tuple[NodeSpec, ...] = ()
    channel: ChannelParams = field(default_factory=ChannelParams)
    radio: RadioConfig = field(default_factory=RadioConfig)
    ptdma: TdmaParams = field(default_factory=TdmaParams)
    ptdma_updates: tuple[PatternUpdate, ...] = ()
    csma: BackoffConfig = field(default_factory=BackoffConfig)
    superframe: SuperframeConfig = field(default_factory=SuperframeConfig)
    smac: DutyCycleConfig = field(default_factory=DutyCycleConfig)
    pbtdma: PreambleSlotConfig = field(default_factory=PreambleSlotConfig)
    wakeup: WakeupConfig = field(default_factory=WakeupConfig)
    emergency: EmergencyConfig = field(default_factory=EmergencyConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    ondemand: OnDemandConfig = field(default_factory=OnDemandConfig)
    energy: PowerProfile = field(default_factory=PowerProfile)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def wakeup_table(self) -> WakeupTable:
        ordered = sorted(self.nodes, key=lambda n: n.slot)
        return WakeupTable.from_patterns({n.id: n.pattern for n in ordered})

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_node(self, node_id: str, **changes) -> "Scenario":
        nodes = tuple(dataclasses.replace(n, **changes) if n.id == node_id else n for n in self.nodes)
        return validate(self.replace(nodes=nodes))


SECTIONS: dict[str, type] = {
    "channel": ChannelParams,
    "radio": RadioConfig,
    "ptdma": TdmaParams,
    "csma": BackoffConfig,
    "superframe": SuperframeConfig,
    "smac": DutyCycleConfig,
    "pbtdma": PreambleSlotConfig,
    "wakeup": WakeupConfig,
    "emergency": EmergencyConfig,
    "traffic": TrafficConfig,
    "ondemand": OnDemandConfig,
    "energy": PowerProfile,
}
SCENARIO_KEYS = ("name", "mac", "duration_us", "seeds", "event_cap", "coordinator_channel")
NODE_KEYS = {
    "placement", "depth_m", "distance_m", "angle_deg", "pattern", "slot", "wakeup_channel",
    "class", "tx_power_dbm", "rate", "rate_hz", "gts",
}


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    return int(text.replace("_", ""))


def _list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _seeds(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(_int(lo), _int(hi) + 1))
    return tuple(_int(x) for x in _list(text))


def _convert(default: Any, text: str) -> Any:
    if isinstance(default, bool):
        return _bool(text)
    if isinstance(default, int):
        return _int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, Enum):
        return type(default)(text.strip())
    if isinstance(default, tuple):
        return tuple(_list(text))
    return text.strip()


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, tuple):
        return ", ".join(map(str, value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_requests(text: str) -> tuple[OnDemandRequest, ...]:
    out = []
    for item in _list(text):
        parts = item.split()
        if len(parts) != 4:
            raise ValueError(f"on-demand request {item!r} must read '<at_us> <node> <continuous|noncontinuous> <n>'")
        out.append(OnDemandRequest(_int(parts[0]), parts[1], SessionKind(parts[2]), _int(parts[3])))
    return tuple(out)


def _parse_updates(text: str) -> tuple[PatternUpdate, ...]:
    out = []
    for item in _list(text):
        parts = item.split()
        if len(parts) != 3:
            raise ValueError(f"pattern update {item!r} must read '<at_us> <node> <bits>'")
        out.append(PatternUpdate(_int(parts[0]), parts[1], WakeupPattern.parse(parts[2])))
    return tuple(out)


def _build_section(name: str, cls: type, items: dict[str, str]):
    defaults = cls()
    kwargs = {}
    valid = {f.name for f in dataclasses.fields(cls)}
    for key, text in items.items():
        if name == "ondemand" and key == "requests":
            try:
                kwargs[key] = _parse_requests(text)
            except (ValueError, ConfigError) as exc:
                raise ScenarioError(name, str(exc)) from None
            continue
        if key not in valid:
            raise ScenarioError(name, f"unknown key {key!r}")
        try:
            kwargs[key] = _convert(getattr(defaults, key), text)
        except ValueError as exc:
            raise ScenarioError(name, f"bad value for {key!r}: {exc}") from None
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ScenarioError(name, str(exc)) from None


def _build_node(node_id: str, items: dict[str, str]) -> NodeSpec:
    section = f"node.{node_id}"
    kw: dict[str, Any] = {"id": node_id}
    for key, text in items.items():
        if key not in NODE_KEYS:
            raise ScenarioError(section, f"unknown key {key!r}")
        try:
            if key == "placement":
                kw[key] = Placement(text.strip())
            elif key in ("depth_m", "distance_m", "angle_deg", "tx_power_dbm", "rate", "rate_hz"):
                kw[key] = float(text)
            elif key in ("slot", "wakeup_channel"):
                kw[key] = _int(text)
            elif key == "gts":
                kw[key] = _bool(text)
            elif key == "class":
                if text.strip() not in (CRITICAL, NONCRITICAL):
                    raise ValueError(f"class must be {CRITICAL} or {NONCRITICAL}")
                kw["cls"] = text.strip()
            elif key == "pattern":
                kw[key] = str(WakeupPattern.parse(text))
        except (ValueError, ConfigError) as exc:
            raise ScenarioError(section, f"bad value for {key!r}: {exc}") from None
    if kw.get("placement") is Placement.IN_BODY and "depth_m" not in kw:
        kw["depth_m"] = 0.05
    return NodeSpec(**kw)


def parse_scenario(text: str) -> Scenario:
    if not text.strip():
        raise ScenarioSyntaxError(1, "empty scenario; expected a [section] header")
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#", ";"), default_section="__defaults__")
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioSyntaxError(exc.lineno, "content before the first [section] header") from None
    except configparser.ParsingError as exc:
        line, content = exc.errors[0]
        raise ScenarioSyntaxError(line, f"cannot parse {content.strip()!r}; expected 'key = value'") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ScenarioSyntaxError(exc.lineno or 1, str(exc).split(": ", 1)[-1]) from None
    if not cp.sections():
        raise ScenarioSyntaxError(1, "no [section] headers found")

    kw: dict[str, Any] = {}
    nodes = []
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "scenario":
            for key, val in items.items():
                if key not in SCENARIO_KEYS:
                    raise ScenarioError(sec, f"unknown key {key!r}")
                try:
                    if key == "seeds":
                        kw["seeds"] = _seeds(val)
                    elif key in ("duration_us", "event_cap", "coordinator_channel"):
                        kw[key] = _int(val)
                    else:
                        kw[key] = val.strip()
                except ValueError as exc:
                    raise ScenarioError(sec, f"bad value for {key!r}: {exc}") from None
        elif sec.startswith("node."):
            nodes.append(_build_node(sec[5:], items))
        elif sec in SECTIONS:
            if sec == "ptdma" and "updates" in items:
                try:
                    kw["ptdma_updates"] = _parse_updates(items.pop("updates"))
                except (ValueError, ConfigError) as exc:
                    raise ScenarioError(sec, str(exc)) from None
            kw[sec] = _build_section(sec, SECTIONS[sec], items)
        else:
            raise ScenarioError(sec, "unknown section")
    kw["nodes"] = tuple(nodes)
    return validate(Scenario(**kw))


def _node_defaults(sc: Scenario) -> tuple[NodeSpec, ...]:
    """Fill per-node defaults that depend on the whole node list."""
    n = len(sc.nodes)
    out = []
    for i, node in enumerate(sc.nodes):
        changes: dict[str, Any] = {}
        if node.slot is None:
            changes["slot"] = i
        if node.wakeup_channel is None:
            changes["wakeup_channel"] = i + 1
        if node.angle_deg is None:
            changes["angle_deg"] = 360.0 * i / n
        out.append(dataclasses.replace(node, **changes) if changes else node)
    return tuple(out)


def validate(sc: Scenario) -> Scenario:
    """Check every cross-section invariant; returns the scenario with defaults filled."""
    if sc.mac not in MACS:
        raise ScenarioError("scenario", f"unknown MAC {sc.mac!r}; expected one of {', '.join(MACS)}")
    if sc.duration_us < 0:
        raise ScenarioError("scenario", "duration_us must be >= 0")
    if not sc.seeds:
        raise ScenarioError("scenario", "at least one seed is required")
    if sc.event_cap < 1:
        raise ScenarioError("scenario", "event_cap must be >= 1")
    ids = [n.id for n in sc.nodes]
    if len(set(ids)) != len(ids) or COORDINATOR in ids:
        raise ScenarioError("node", f"node ids must be unique and not {COORDINATOR!r}")
    sc = dataclasses.replace(sc, nodes=_node_defaults(sc))
    known = set(ids)
    for node in sc.nodes:
        section = f"node.{node.id}"
        try:
            LinkGeometry(node.distance_m, node.placement, Placement.ON_BODY, node.depth_m)
        except ValueError as exc:
            raise ScenarioError(section, str(exc)) from None
        if node.placement is Placement.ON_BODY and node.depth_m:
            raise ScenarioError(section, "on-body nodes have depth_m = 0")
        if not math.isfinite(node.angle_deg):
            raise ScenarioError(section, "angle_deg must be finite")
        for key in ("rate", "rate_hz"):
            v = getattr(node, key)
            if v is not None and v < 0:
                raise ScenarioError(section, f"{key} must be non-negative")
    if sc.nodes:
        patterned = [n for n in sc.nodes if n.pattern is not None]
        if sc.mac == "ptdma" and len(patterned) != len(sc.nodes):
            missing = [n.id for n in sc.nodes if n.pattern is None]
            raise ScenarioError("ptdma", f"every node needs a wake-up pattern; missing for {missing}")
        if len({len(n.pattern) for n in patterned}) > 1:
            raise ScenarioError("ptdma", "wake-up patterns must all have the same length")
        slots = sorted(n.slot for n in sc.nodes)
        if slots != list(range(len(slots))):
            raise ScenarioError("ptdma", f"slot indices must be unique and contiguous from 0, got {slots}")
        spf = sc.ptdma.slots_per_frame
        if spf and spf < len(sc.nodes):
            over = [n.id for n in sc.nodes if n.slot >= spf]
            raise ScenarioError("ptdma", f"slots_per_frame={spf} is smaller than the node count; overflow nodes {over}")
    for upd in sc.ptdma_updates:
        if upd.node not in known:
            raise ScenarioError("ptdma", f"pattern update references unknown node {upd.node!r}")
        if sc.nodes and sc.nodes[0].pattern is not None and len(upd.pattern) != len(sc.nodes[0].pattern):
            raise ScenarioError("ptdma", f"pattern update for {upd.node!r} has the wrong length")
    for name in sc.emergency.nodes:
        if name not in known:
            raise ScenarioError("emergency", f"unknown node {name!r}")
    for name in sc.pbtdma.addresses:
        if name not in known:
            raise ScenarioError("pbtdma", f"unknown node {name!r} in addresses")
    for req in sc.ondemand.requests:
        if req.target not in known:
            raise ScenarioError("ondemand", f"request targets unknown node {req.target!r}")
        if req.amount < 1:
            raise ScenarioError("ondemand", "request count/stop time must be >= 1")
    return sc


def serialize_scenario(sc: Scenario) -> str:
    lines = ["[scenario]"]
    lines += [
        f"name = {sc.name}",
        f"mac = {sc.mac}",
        f"duration_us = {sc.duration_us}",
        f"seeds = {', '.join(map(str, sc.seeds))}",
        f"event_cap = {sc.event_cap}",
        f"coordinator_channel = {sc.coordinator_channel}",
    ]
    for sec, cls in SECTIONS.items():
        obj = getattr(sc, sec)
        lines += ["", f"[{sec}]"]
        for f in dataclasses.fields(cls):
            value = getattr(obj, f.name)
            if sec == "ondemand" and f.name == "requests":
                if value:
                    lines.append("requests = " + ", ".join(
                        f"{r.at_us} {r.target} {r.kind.value} {r.amount}" for r in value))
                continue
            if isinstance(value, tuple) and not value:
                continue
            lines.append(f"{f.name} = {_render(value)}")
        if sec == "ptdma" and sc.ptdma_updates:
            lines.append("updates = " + ", ".join(f"{u.at_us} {u.node} {u.pattern}" for u in sc.ptdma_updates))
    for n in sc.nodes:
        lines += ["", f"[node.{n.id}]", f"placement = {n.placement.value}"]
        for key, attr in (("depth_m", "depth_m"), ("distance_m", "distance_m"), ("angle_deg", "angle_deg"),
                          ("pattern", "pattern"), ("slot", "slot"), ("wakeup_channel", "wakeup_channel"),
                          ("class", "cls"), ("tx_power_dbm", "tx_power_dbm"), ("rate", "rate"),
                          ("rate_hz", "rate_hz"), ("gts", "gts")):
            value = getattr(n, attr)
            if value is not None:
                lines.append(f"{key} = {_render(value)}")
    return "\n".join(lines) + "\n"


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def bundled_text(name: str) -> str:
    if not name.endswith(".scn"):
        name += ".scn"
    return resources.files("bsnmac.scenarios").joinpath(name).read_text(encoding="utf-8")


def bundled(name: str) -> Scenario:
    return parse_scenario(bundled_text(name))


def bundled_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("bsnmac.scenarios").iterdir() if p.name.endswith(".scn"))
