"""Engine-driven MAC state machines for every selectable protocol."""

from __future__ import annotations

from typing import TYPE_CHECKING

from . import ptdma as pt
from .baselines import pbtdma_step, smac_step
from .common import ConfigError, MacAction
from .contention import CRITICAL, NONCRITICAL, CsmaState, GtsAllocator, csma_step
from .engine import EventKind
from .metrics import RadioState
from .traffic import TrafficClass, generate_normal

if TYPE_CHECKING:
    from .network import Network, NodeRt

LISTEN = RadioState.IDLE_LISTEN


class Mac:
    def __init__(self, net: "Network"):
        self.net = net
        self.engine = net.engine
        self.sc = net.sc

    def start(self) -> None:
        raise NotImplementedError

    def on_enqueue(self, node: "NodeRt") -> None:
        pass

    def on_emergency(self, node: "NodeRt") -> None:
        """Wake-up signal from ``node`` reached the coordinator."""

    def on_session_start(self, node, session) -> None:
        pass

    def on_session_end(self, node, session) -> None:
        pass

    def schedule_free_arrivals(self) -> None:
        for node in self.net.sensors:
            rng = self.engine.stream("traffic/" + node.id)
            self.net.schedule_arrivals(node, generate_normal(node.traffic, None, self.sc.duration_us, rng))


class CsmaMac(Mac):
    """Always-on slotted CSMA/CA with ACKs; also the contention engine for
    the duty-cycled and beacon-enabled variants (via ``cycle``/``open``/``close``)."""

    prioritized = False

    def __init__(self, net, prioritized: bool | None = None):
        super().__init__(net)
        if prioritized is not None:
            self.prioritized = prioritized
        self.cfg = self.sc.csma
        self.need = self.cfg.cca_us + net.exchange_us
        self.cycle: int | None = None
        self.open = 0
        self.close = 0

    def _check_period(self) -> None:
        if self.close - self.open < self.need:
            raise ConfigError(
                f"{type(self).__name__}: contention period of {self.close - self.open} us cannot hold one "
                f"CCA + data + ACK exchange ({self.need} us)"
            )

    def start(self) -> None:
        for node in self.net.nodes:
            self.net.set_base(node, LISTEN)
        self.schedule_free_arrivals()

    def may_contend(self, node) -> bool:
        return True

    def contending(self, node, active: bool) -> None:
        pass

    def on_enqueue(self, node) -> None:
        if not node.busy and self.may_contend(node):
            self.begin(node)

    def fit(self, t: int) -> int:
        """Earliest back-off boundary >= t where CCA plus one exchange fits."""
        slot = self.cfg.backoff_slot_us
        if self.cycle is None:
            return -(-t // slot) * slot
        cycle = self.cycle
        while True:
            k, off = divmod(t, cycle)
            start = k * cycle + self.open
            t = start if off < self.open else start + -(-(off - self.open) // slot) * slot
            if t + self.need <= k * cycle + self.close:
                return t
            t = (k + 1) * cycle

    def begin(self, node) -> None:
        node.busy = True
        pkt = node.queue[0]
        cls = CRITICAL if node.spec.cls == CRITICAL or pkt.cls is TrafficClass.EMERGENCY else NONCRITICAL
        node.csma = CsmaState.fresh(cls, self.cfg, self.prioritized)
        csma_step(node.csma, None, node.rng)
        self.contending(node, True)
        self._wait_backoff(node)

    def _wait_backoff(self, node) -> None:
        now = self.engine.now
        t = self.fit(self.fit(now) + node.csma.pending_slots * self.cfg.backoff_slot_us)
        self.engine.schedule(t, self._cca_start, node, kind=EventKind.CCA, target=node.id)

    def _cca_start(self, node) -> None:
        node.cca = True
        self.net.refresh(node)
        now = self.engine.now
        self.engine.schedule(now + self.cfg.cca_us, self._cca_end, node, now, kind=EventKind.CCA, target=node.id)

    def _cca_end(self, node, t0) -> None:
        node.cca = False
        result = self.net.sense(node, t0, self.engine.now)
        self.net.refresh(node)
        action = csma_step(node.csma, result, node.rng)
        if action is MacAction.TRANSMIT:
            self.net.exchange(node, node.queue[0], self._exchanged)
        elif action is MacAction.BACKOFF:
            self._wait_backoff(node)
        else:
            self.net.drop_head(node, "access")
            self._next(node)

    def _exchanged(self, node, ok, ctx) -> None:
        self.net.finish_attempt(node, ok)
        self._next(node)

    def _next(self, node) -> None:
        node.busy = False
        if node.queue and self.may_contend(node):
            self.begin(node)
        else:
            self.contending(node, False)


class SmacMac(CsmaMac):
    """Globally synchronised fixed listen/sleep cycle; contention only while listening."""

    def __init__(self, net):
        super().__init__(net, prioritized=False)
        self.duty = self.sc.smac
        self.cycle = self.duty.cycle_us
        self.open = 0
        self.close = self.duty.listen_us
        self._check_period()

    def start(self) -> None:
        self.schedule_free_arrivals()
        self.engine.schedule(0, self._listen, kind=EventKind.FRAME, target="smac")

    def _listen(self) -> None:
        now = self.engine.now
        for node in self.net.nodes:
            self.net.set_base(node, LISTEN)
        self.engine.schedule(now + self.duty.listen_us, self._sleep, kind=EventKind.FRAME, target="smac")
        if now + self.cycle < self.sc.duration_us:
            self.engine.schedule(now + self.cycle, self._listen, kind=EventKind.FRAME, target="smac")

    def _sleep(self) -> None:
        for node in self.net.nodes:
            self.net.set_base(node, self.net.sleep_state)

    def action(self, node) -> MacAction:
        return smac_step(node.id, self.engine.now, self.duty, len(node.queue))


class BeaconMac(CsmaMac):
    """Beacon-enabled superframe: beacon, CAP with slotted CSMA/CA, GTS region, inactive period."""

    def __init__(self, net):
        super().__init__(net, prioritized=False)
        self.sf = self.sc.superframe
        self.beacon_air = self.sc.radio.airtime_us(self.sf.beacon_bits)
        self.cycle = self.sf.beacon_interval_us
        self.open = self.beacon_air
        self.close = self.sf.cap_us
        self._check_period()
        self.alloc = GtsAllocator(self.sf.gts_slots, self.sf.gts_expiry_frames)
        self.used: set[str] = set()
        self.fallback: set[str] = set()
        self.usage_log: list[frozenset[str]] = []
        self.gts_capacity = self.sf.gts_slot_us // net.exchange_us
        self.in_cap = False
        self.index = 0

    @property
    def gts_denied(self) -> int:
        return self.alloc.denied

    def start(self) -> None:
        self.schedule_free_arrivals()
        self.engine.schedule(0, self._beacon, kind=EventKind.BEACON, target="coord")

    def may_contend(self, node) -> bool:
        # GTS-capable nodes wait for the beacon's allocation. Denied nodes use
        # the CAP; owners only spill backlog their slot cannot carry.
        if node.spec.gts:
            if node.id in self.alloc.slots:
                return len(node.queue) > self.gts_capacity
            return node.id in self.fallback
        return True

    def contending(self, node, active: bool) -> None:
        if self.in_cap:
            self.net.set_base(node, LISTEN if active else self.net.sleep_state)

    def _beacon(self) -> None:
        net, now, sf = self.net, self.engine.now, self.sf
        if self.index:
            self.usage_log.append(frozenset(self.used))
            self.alloc.end_superframe(self.used)
        self.alloc.beacon()
        self.used = set()
        self.index += 1
        net.set_base(net.coord, LISTEN)
        tx = net.start_tx(net.coord, None, "beacon", self.beacon_air)
        for node in net.sensors:
            net.set_base(node, RadioState.RECEIVE)
        self.fallback = set()
        for node in net.sensors:
            if node.spec.gts and node.queue and self.alloc.request(node.id) is None:
                self.fallback.add(node.id)
        cap_end = now + sf.cap_us
        for j, owner in enumerate(self.alloc.slots):
            if owner is not None:
                start = cap_end + j * sf.gts_slot_us
                self.engine.schedule(start, self._gts_start, net.by_id[owner], start + sf.gts_slot_us,
                                     kind=EventKind.SLOT, target=owner)
        self.engine.schedule(now + self.beacon_air, self._beacon_end, tx, kind=EventKind.TX_END, target="coord")
        self.engine.schedule(cap_end, self._cap_end, kind=EventKind.SLOT, target="coord")
        self.engine.schedule(cap_end + sf.gts_slots * sf.gts_slot_us, self._inactive, kind=EventKind.SLOT,
                             target="coord")
        if now + sf.beacon_interval_us < self.sc.duration_us:
            self.engine.schedule(now + sf.beacon_interval_us, self._beacon, kind=EventKind.BEACON, target="coord")

    def _beacon_end(self, tx) -> None:
        net = self.net
        net.end_tx(tx)
        self.in_cap = True
        for node in net.sensors:
            wants = node.busy or (node.queue and self.may_contend(node))
            net.set_base(node, LISTEN if wants else net.sleep_state)
        for node in net.sensors:
            if node.queue and not node.busy and self.may_contend(node):
                self.begin(node)

    def _cap_end(self) -> None:
        self.in_cap = False
        for node in self.net.sensors:
            self.net.set_base(node, self.net.sleep_state)

    def _inactive(self) -> None:
        self.net.set_base(self.net.coord, self.net.sleep_state)

    def _gts_start(self, node, end) -> None:
        self.net.set_base(node, LISTEN)
        self.engine.schedule(end, self._gts_end, node, kind=EventKind.SLOT, target=node.id)
        self._serve(node, end)

    def _serve(self, node, end) -> None:
        if node.queue and not node.busy and self.engine.now + self.net.exchange_us <= end:
            node.busy = True
            self.used.add(node.id)
            self.net.exchange(node, node.queue[0], self._served, end)

    def _served(self, node, ok, end) -> None:
        self.net.finish_attempt(node, ok)
        node.busy = False
        self._serve(node, end)

    def _gts_end(self, node) -> None:
        self.net.set_base(node, self.net.sleep_state)


class PbtdmaMac(Mac):
    """Round-robin slots announced by a coordinator preamble."""

    def __init__(self, net):
        super().__init__(net)
        self.cfg = self.sc.pbtdma
        self.order = self.cfg.addresses or tuple(s.id for s in net.sensors)
        if self.cfg.slot_us - self.cfg.preamble_us < net.exchange_us:
            raise ConfigError("PB-TDMA slot remainder cannot hold one data + ACK exchange")

    def start(self) -> None:
        self.schedule_free_arrivals()
        if self.order:
            self.engine.schedule(0, self._slot, 0, kind=EventKind.SLOT, target="coord")

    def _slot(self, k: int) -> None:
        net, now = self.net, self.engine.now
        net.set_base(net.coord, LISTEN)
        tx = net.start_tx(net.coord, None, "preamble", self.cfg.preamble_us)
        for node in net.sensors:
            net.set_base(node, RadioState.RECEIVE)
        self.engine.schedule(now + self.cfg.preamble_us, self._preamble_end, k, tx, now + self.cfg.slot_us,
                             kind=EventKind.TX_END, target="coord")
        if now + self.cfg.slot_us < self.sc.duration_us:
            self.engine.schedule(now + self.cfg.slot_us, self._slot, k + 1, kind=EventKind.SLOT, target="coord")

    def _preamble_end(self, k, tx, end) -> None:
        net = self.net
        net.end_tx(tx)
        owner = self.order[k % len(self.order)]
        for node in net.sensors:
            net.set_base(node, LISTEN if node.id == owner else net.sleep_state)
        self._serve(net.by_id[owner], end)

    def action(self, node) -> MacAction:
        return pbtdma_step(node.id, self.engine.now, self.cfg, len(node.queue), self.order)

    def _serve(self, node, end) -> None:
        if node.queue and not node.busy and self.engine.now + self.net.exchange_us <= end:
            node.busy = True
            self.net.exchange(node, node.queue[0], self._served, end)

    def _served(self, node, ok, end) -> None:
        self.net.finish_attempt(node, ok)
        node.busy = False
        self._serve(node, end)


class PtdmaMac(Mac):
    """Pattern-based wake-up table TDMA with wake-up-radio emergency grants
    and on-demand sessions."""

    def __init__(self, net):
        super().__init__(net)
        self.params = self.sc.ptdma
        self.table = self.sc.wakeup_table() if net.sensors else None
        self.pending_table: pt.WakeupTable | None = None
        self.schedule = pt.build_schedule(self.table, self.params) if self.table else None
        self.slot_us = self.params.slot_duration_us
        self.frame_us = self.params.frame_us(len(net.sensors)) if net.sensors else self.slot_us
        self.length = self.table.length if self.table else 1
        if self.slot_us - self.params.guard_us < net.exchange_us:
            raise ConfigError(
                f"pattern-TDMA window of {self.slot_us - self.params.guard_us} us cannot hold one "
                f"data + ACK exchange ({net.exchange_us} us)"
            )
        self.grants: dict[int, "NodeRt"] = {}
        self.override: set[str] = set()
        self.release_at_boundary: set[str] = set()
        self.frame_active = False
        self.batch: list["NodeRt"] = []
        self.schedules_built = 1
        self.windows_used = 0

    def start(self) -> None:
        if self.schedule is None:
            return
        self.engine.schedule(0, self._frame, 0, kind=EventKind.FRAME, target="coord")
        for upd in self.sc.ptdma_updates:
            if upd.at_us < self.sc.duration_us:
                self.engine.schedule(upd.at_us, self._update, upd, kind=EventKind.TIMER, target=upd.node)

    def _update(self, upd: pt.PatternUpdate) -> None:
        self.pending_table = pt.update_pattern(self.pending_table or self.table, upd.node, upd.pattern)

    def _coord_base(self) -> None:
        net = self.net
        net.set_base(net.coord, RadioState.RECEIVE if self.frame_active else net.sleep_state)

    def _frame(self, index: int) -> None:
        net, now = self.net, self.engine.now
        h, f = divmod(index, self.length)
        if f == 0:
            if self.pending_table is not None:
                self.table = self.pending_table
                self.pending_table = None
                self.schedule = pt.build_schedule(self.table, self.params)
                self.schedules_built += 1
            self.override -= self.release_at_boundary
            self.release_at_boundary.clear()
            hyper = self.frame_us * self.length
            for node in net.sensors:
                rng = self.engine.stream("traffic/" + node.id)
                times = generate_normal(node.traffic, self.table.pattern(node.id), hyper, rng, self.frame_us)
                net.schedule_arrivals(node, times, offset=now)
        self.frame_active = f in self.schedule.coordinator_active_frames or bool(self.override)
        self._coord_base()
        table = self.table
        for node in net.sensors:
            entry = table.entries[node.id]
            if entry.pattern.bits[f] or node.id in self.override:
                start = now + entry.slot_index * self.slot_us
                self.engine.schedule(start, self._window, node, start, start + self.slot_us - self.params.guard_us,
                                     kind=EventKind.SLOT, target=node.id)
        nxt = now + self.frame_us
        if nxt < self.sc.duration_us:
            self.engine.schedule(nxt, self._frame, index + 1, kind=EventKind.FRAME, target="coord")

    def _window(self, node, start: int, end: int) -> None:
        if start in self.grants:
            return
        if node.id not in self.override:
            if pt.step(node.id, start, self.schedule, len(node.queue)) is not MacAction.TRANSMIT:
                return
        self._serve(node, end)

    def _serve(self, node, end: int) -> None:
        if node.queue and not node.busy and self.engine.now + self.net.exchange_us <= end:
            node.busy = True
            self.windows_used += 1
            self.net.exchange(node, node.queue[0], self._served, end)

    def _served(self, node, ok, end) -> None:
        self.net.finish_attempt(node, ok)
        node.busy = False
        self._serve(node, end)

    # Emergency handling: the coordinator stays awake and hands out whole
    # slots right after the slot in flight; the displaced owner waits for
    # its next window.

    def on_emergency(self, node) -> None:
        net = self.net
        net.hold_awake(net.coord, +1)
        net.hold_awake(node, +1)
        self.batch.append(node)
        if len(self.batch) == 1:
            self.engine.schedule(self.engine.now, self._grant_batch, kind=EventKind.TIMER, target="coord")

    def _grant_batch(self) -> None:
        batch, self.batch = self.batch, []
        for node in self._order_by_backoff(batch):
            self._grant(node)

    def _order_by_backoff(self, nodes: list) -> list:
        """Critical-class back-off contest: smallest draw goes first, ties redraw."""
        w0 = self.sc.csma.w0_critical
        remaining = list(nodes)
        order = []
        while remaining:
            if len(remaining) == 1:
                order.append(remaining.pop())
                break
            draws = [(n.rng.randrange(w0), n) for n in remaining]
            best = min(d for d, _ in draws)
            winners = [n for d, n in draws if d == best]
            if len(winners) == 1:
                order.append(winners[0])
                remaining.remove(winners[0])
        return order

    def _grant(self, node) -> None:
        b = (self.engine.now // self.slot_us + 1) * self.slot_us
        while b in self.grants:
            b += self.slot_us
        self.grants[b] = node
        self.engine.schedule(b, self._grant_slot, node, b, kind=EventKind.SLOT, target=node.id)

    def _grant_slot(self, node, b: int) -> None:
        if node.busy or not node.queue:
            # Still finishing a normal exchange (or nothing left): try the next slot.
            del self.grants[b]
            if node.queue and node.detector is not None and node.detector.unresolved:
                self._grant(node)
            else:
                self._release(node)
            return
        node.busy = True
        self.net.exchange(node, node.queue[0], self._granted, b)

    def _granted(self, node, ok, b) -> None:
        del self.grants[b]
        pkt = node.queue[0]
        self.net.finish_attempt(node, ok)
        node.busy = False
        if pkt.fate is None:
            self._grant(node)
        else:
            self._release(node)

    def _release(self, node) -> None:
        self.net.hold_awake(node, -1)
        self.net.hold_awake(self.net.coord, -1)

    def on_session_start(self, node, session) -> None:
        self.override.add(node.id)
        self.release_at_boundary.discard(node.id)

    def on_session_end(self, node, session) -> None:
        from .wakeup import SessionKind

        if session.kind is SessionKind.NONCONTINUOUS:
            self.override.discard(node.id)
        else:
            self.release_at_boundary.add(node.id)


MACS = {
    "ptdma": PtdmaMac,
    "csma": lambda net: CsmaMac(net, prioritized=False),
    "csma-prio": lambda net: CsmaMac(net, prioritized=True),
    "smac": SmacMac,
    "pbtdma": PbtdmaMac,
    "beacon154": BeaconMac,
}


def make_mac(net) -> Mac:
    return MACS[net.sc.mac](net)
