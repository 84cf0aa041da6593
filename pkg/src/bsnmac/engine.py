"""Deterministic discrete-event kernel.

Time is an integer count of microseconds. Events fire strictly in
``(at, seq)`` order where ``seq`` is a per-engine insertion counter, so two
runs that schedule the same events produce the same trace.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from enum import Enum
from typing import Any, Callable

DEFAULT_EVENT_CAP = 50_000_000


class EventKind(Enum):
    SLOT = "slot"
    FRAME = "frame"
    ARRIVAL = "arrival"
    TX_END = "tx_end"
    CCA = "cca"
    WAKEUP = "wakeup"
    BEACON = "beacon"
    TIMER = "timer"


class CausalityError(RuntimeError):
    pass


class EventCapExceeded(RuntimeError):
    pass


class Event:
    """Handle to a scheduled event. Valid until it fires or is cancelled."""

    __slots__ = ("at", "seq", "target", "kind", "callback", "args", "cancelled", "fired")

    def __init__(self, at, seq, target, kind, callback, args):
        self.at = at
        self.seq = seq
        self.target = target
        self.kind = kind
        self.callback = callback
        self.args = args
        self.cancelled = False
        self.fired = False

    def __repr__(self) -> str:
        return f"Event(at={self.at}, seq={self.seq}, target={self.target!r}, kind={self.kind.name})"


def stream_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Engine:
    def __init__(self, seed: int = 0, event_cap: int = DEFAULT_EVENT_CAP, trace: bool = False):
        self.seed = seed
        self.event_cap = event_cap
        self.now = 0
        self.processed = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._streams: dict[str, random.Random] = {}
        self.trace: list[tuple[int, int, str, str]] | None = [] if trace else None

    def stream(self, name: str) -> random.Random:
        """Named random stream; independent of which other streams exist."""
        rng = self._streams.get(name)
        if rng is None:
            rng = self._streams[name] = random.Random(stream_seed(self.seed, name))
        return rng

    def schedule(
        self,
        at: int,
        callback: Callable[..., Any],
        *args: Any,
        kind: EventKind = EventKind.TIMER,
        target: str = "",
    ) -> Event:
        if at < self.now:
            raise CausalityError(
                f"causality violation: {kind.name} event for {target!r} scheduled at t={at} "
                f"but engine time is t={self.now}"
            )
        ev = Event(at, self._seq, target, kind, callback, args)
        self._seq += 1
        heapq.heappush(self._queue, (at, ev.seq, ev))
        return ev

    def cancel(self, ev: Event) -> bool:
        if ev.fired or ev.cancelled:
            return False
        ev.cancelled = True
        return True

    @property
    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run(self, until: int) -> int:
        """Process every event with ``at <= until``; return how many fired."""
        if until < self.now:
            raise CausalityError(f"causality violation: run(until={until}) but engine time is t={self.now}")
        queue = self._queue
        trace = self.trace
        count = 0
        cap = self.event_cap
        while queue and queue[0][0] <= until:
            at, seq, ev = heapq.heappop(queue)
            if ev.cancelled:
                continue
            self.now = at
            ev.fired = True
            if trace is not None:
                trace.append((at, seq, ev.target, ev.kind.value))
            ev.callback(*ev.args)
            count += 1
            self.processed += 1
            if self.processed > cap:
                raise EventCapExceeded(
                    f"event cap of {cap} exceeded at t={at} (last event {ev!r}); "
                    "a handler is probably rescheduling without bound"
                )
        self.now = until
        return count

    def trace_lines(self) -> list[str]:
        return [f"{at} {seq} {target} {kind}" for at, seq, target, kind in self.trace or ()]
