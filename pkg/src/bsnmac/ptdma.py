"""Pattern-based wake-up table TDMA.

Each node owns one slot index in every TDMA frame and a wake-up pattern with
one bit per frame of the hyperperiod: ``0`` keeps it asleep for the whole
frame, ``1`` lets it use its slot. The coordinator's own pattern is the
bitwise OR of the table rows, so it sleeps through frames nobody uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .common import COORDINATOR, ConfigError, MacAction


@dataclass(frozen=True)
class WakeupPattern:
    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ConfigError("wake-up pattern needs at least one bit")
        if any(b not in (0, 1) for b in self.bits):
            raise ConfigError(f"wake-up pattern bits must be 0/1, got {self.bits}")

    @classmethod
    def parse(cls, text: str) -> "WakeupPattern":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ConfigError(f"invalid wake-up pattern {text!r}; expected a string of 0/1")
        return cls(tuple(int(c) for c in text))

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, frame: int) -> int:
        return self.bits[frame]

    def __str__(self) -> str:
        return "".join(map(str, self.bits))

    @property
    def active_frames(self) -> list[int]:
        return [f for f, b in enumerate(self.bits) if b]


@dataclass(frozen=True)
class TableEntry:
    pattern: WakeupPattern
    slot_index: int


@dataclass(frozen=True)
class WakeupTable:
    entries: Mapping[str, TableEntry]
    version: int = 0

    def __post_init__(self):
        lengths = {len(e.pattern) for e in self.entries.values()}
        if len(lengths) > 1:
            raise ConfigError(f"all wake-up patterns must share one length, got lengths {sorted(lengths)}")
        slots = sorted(e.slot_index for e in self.entries.values())
        if slots != list(range(len(slots))):
            raise ConfigError(f"slot indices must be unique and contiguous from 0, got {slots}")

    @classmethod
    def from_patterns(cls, patterns: Mapping[str, str | WakeupPattern], version: int = 0) -> "WakeupTable":
        """Slots are assigned in registration (insertion) order."""
        entries = {}
        for slot, (node, pat) in enumerate(patterns.items()):
            if isinstance(pat, str):
                pat = WakeupPattern.parse(pat)
            entries[node] = TableEntry(pat, slot)
        return cls(entries, version)

    @property
    def length(self) -> int:
        return len(next(iter(self.entries.values())).pattern) if self.entries else 0

    def __len__(self) -> int:
        return len(self.entries)

    def pattern(self, node: str) -> WakeupPattern:
        return self.entries[node].pattern


@dataclass(frozen=True)
class TdmaParams:
    slot_duration_us: int = 10_000
    guard_us: int = 1_000
    # 0 means "one slot per registered node".
    slots_per_frame: int = 0

    def __post_init__(self):
        if not self.slot_duration_us > self.guard_us >= 0:
            raise ConfigError("TDMA slot_duration_us must exceed guard_us >= 0")
        if self.slots_per_frame < 0:
            raise ConfigError("slots_per_frame must be >= 0")

    def frame_us(self, n_nodes: int) -> int:
        return self.slot_duration_us * (self.slots_per_frame or n_nodes)


@dataclass(frozen=True)
class Window:
    frame: int
    slot: int
    start: int
    end: int


@dataclass(frozen=True)
class TdmaSchedule:
    windows: dict[str, tuple[Window, ...]]
    coordinator_active_frames: frozenset[int]
    frame_us: int
    length: int
    slot_duration_us: int

    @property
    def hyperperiod_us(self) -> int:
        return self.frame_us * self.length

    def window_at(self, node: str, t: int) -> Window | None:
        """The window of ``node`` opening exactly at ``t`` (mod hyperperiod)."""
        local = t % self.hyperperiod_us
        for w in self.windows.get(node, ()):
            if w.start == local:
                return w
        return None

    def all_windows(self) -> Iterable[tuple[str, Window]]:
        for node, ws in self.windows.items():
            for w in ws:
                yield node, w


def derive_coordinator_pattern(table: WakeupTable) -> WakeupPattern:
    if not table.entries:
        raise ConfigError("cannot derive a coordinator pattern from an empty wake-up table")
    bits = [0] * table.length
    for entry in table.entries.values():
        for f, b in enumerate(entry.pattern.bits):
            bits[f] |= b
    return WakeupPattern(tuple(bits))


def build_schedule(table: WakeupTable, params: TdmaParams) -> TdmaSchedule:
    n = len(table)
    slots = params.slots_per_frame or n
    overflow = [node for node, e in table.entries.items() if e.slot_index >= slots]
    if overflow:
        raise ConfigError(f"TDMA capacity exceeded: {slots} slots per frame, overflow nodes {overflow}")
    frame = params.frame_us(n)
    sd = params.slot_duration_us
    windows = {}
    for node, e in table.entries.items():
        windows[node] = tuple(
            Window(f, e.slot_index, f * frame + e.slot_index * sd, f * frame + (e.slot_index + 1) * sd - params.guard_us)
            for f in e.pattern.active_frames
        )
    coord = derive_coordinator_pattern(table) if n else WakeupPattern((0,))
    return TdmaSchedule(windows, frozenset(coord.active_frames), frame, table.length or 1, sd)


def update_pattern(table: WakeupTable, node: str, new_pattern: WakeupPattern | str) -> WakeupTable:
    """Return a new table; the simulator only swaps it in at a hyperperiod boundary."""
    if isinstance(new_pattern, str):
        new_pattern = WakeupPattern.parse(new_pattern)
    if node not in table.entries:
        raise KeyError(f"unknown node {node!r} in wake-up table")
    if len(new_pattern) != table.length:
        raise ConfigError(f"pattern length mismatch: table uses L={table.length}, got {len(new_pattern)} bits")
    entries = dict(table.entries)
    entries[node] = TableEntry(new_pattern, entries[node].slot_index)
    return WakeupTable(entries, table.version + 1)


def step(entity: str, t: int, schedule: TdmaSchedule, queue_len: int = 0) -> MacAction:
    if entity == COORDINATOR:
        frame = (t % schedule.hyperperiod_us) // schedule.frame_us
        return MacAction.RECEIVE if frame in schedule.coordinator_active_frames else MacAction.SLEEP
    if queue_len > 0 and schedule.window_at(entity, t) is not None:
        return MacAction.TRANSMIT
    return MacAction.SLEEP


@dataclass(frozen=True)
class PatternUpdate:
    at_us: int
    node: str
    pattern: WakeupPattern
