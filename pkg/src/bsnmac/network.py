"""Star-topology body network driven by the event engine.

One ``Network`` owns the engine, the shared medium, the energy ledger and
every packet; a MAC object (see ``macs``) decides when each radio wakes,
listens and transmits.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from typing import Callable

from .channel import (
    LinkGeometry,
    Medium,
    ReceptionStatus,
    Transmission,
    cca_from_rx_powers,
    path_loss_db,
    resolve_reception,
)
from .common import COORDINATOR, Placement
from .engine import Engine, EventKind
from .metrics import SLEEPING, EnergyLedger, MetricsReport, RadioState, summarize
from .scenario import NodeSpec, Scenario
from .traffic import Packet, TrafficClass, TrafficConfig, generate_emergency
from .wakeup import (
    EmergencyDetector,
    Purpose,
    SessionError,
    SessionKind,
    SessionTable,
    WakeupMode,
    WakeupSignal,
    deliver_wakeup,
)

BROADCAST = -1
_STATUS = {
    ReceptionStatus.DELIVERED: "delivered",
    ReceptionStatus.LOST_COLLISION: "collision",
    ReceptionStatus.LOST_BELOW_SENSITIVITY: "link",
}


class NodeRt:
    """Runtime state of one radio (sensor or coordinator)."""

    __slots__ = (
        "id", "index", "spec", "queue", "tx", "cca", "rx", "base", "hold", "hold_state", "state",
        "busy", "rng", "csma", "last_fail", "traffic", "detector", "inbody",
    )

    def __init__(self, index: int, spec: NodeSpec | None, rng, traffic: TrafficConfig | None):
        self.id = spec.id if spec else COORDINATOR
        self.index = index
        self.spec = spec
        self.queue: deque[Packet] = deque()
        self.tx = 0
        self.cca = False
        self.rx = 0
        self.base = RadioState.SLEEP
        self.hold = 0
        self.hold_state = RadioState.RECEIVE if spec is None else RadioState.IDLE_LISTEN
        self.state = RadioState.SLEEP
        self.busy = False
        self.rng = rng
        self.csma = None
        self.last_fail = "link"
        self.traffic = traffic
        self.detector: EmergencyDetector | None = None
        self.inbody = spec is not None and spec.placement is Placement.IN_BODY

    @property
    def awake(self) -> bool:
        return self.state not in SLEEPING

    def __repr__(self) -> str:
        return f"NodeRt({self.id})"


def _position(spec: NodeSpec) -> tuple[float, float]:
    a = math.radians(spec.angle_deg or 0.0)
    return spec.distance_m * math.cos(a), spec.distance_m * math.sin(a)


def link_geometry(a: NodeSpec | None, b: NodeSpec | None, d0_m: float) -> LinkGeometry:
    """Geometry between two endpoints; ``None`` is the on-body coordinator at the origin."""
    pa = _position(a) if a else (0.0, 0.0)
    pb = _position(b) if b else (0.0, 0.0)
    dist = max(math.dist(pa, pb), d0_m)
    place_a = a.placement if a else Placement.ON_BODY
    place_b = b.placement if b else Placement.ON_BODY
    depth = max(a.depth_m if a else 0.0, b.depth_m if b else 0.0)
    return LinkGeometry(dist, place_a, place_b, min(depth, dist))


class Network:
    def __init__(self, scenario: Scenario, seed: int, *, trace: bool = False, record_cca: bool = False,
                 record_tx: bool = False):
        from .macs import make_mac

        sc = scenario
        self.sc = sc
        self.seed = seed
        self.engine = Engine(seed, sc.event_cap, trace)
        self.params = sc.channel
        self.radio = sc.radio
        eng = self.engine

        coord = NodeRt(0, None, eng.stream("node/" + COORDINATOR), None)
        self.coord = coord
        self.sensors: list[NodeRt] = []
        for i, spec in enumerate(sc.nodes, start=1):
            tcfg = sc.traffic
            if spec.rate is not None or spec.rate_hz is not None:
                tcfg = dataclasses.replace(
                    tcfg,
                    rate=tcfg.rate if spec.rate is None else spec.rate,
                    rate_hz=tcfg.rate_hz if spec.rate_hz is None else spec.rate_hz,
                )
            self.sensors.append(NodeRt(i, spec, eng.stream("node/" + spec.id), tcfg))
        self.nodes = [coord] + self.sensors
        self.by_id = {n.id: n for n in self.nodes}

        specs = [None] + list(sc.nodes)
        txp = [sc.radio.tx_power_dbm] + [
            sc.radio.tx_power_dbm if s.tx_power_dbm is None else s.tx_power_dbm for s in sc.nodes
        ]
        n = len(self.nodes)
        self.gain = [[-math.inf] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if i != j:
                    geom = link_geometry(specs[i], specs[j], self.params.d0_m)
                    self.gain[i][j] = txp[i] - path_loss_db(geom, self.params)

        self.payload_bits = sc.traffic.payload_bits
        self.airtime = sc.radio.airtime_us(self.payload_bits)
        self.ack_air = sc.radio.airtime_us(sc.radio.ack_bits)
        self.exchange_us = self.airtime + sc.radio.turnaround_us + self.ack_air
        # Only the pattern-TDMA MAC carries a wake-up receiver; the baselines sleep plainly.
        self.wakeup_radio = sc.wakeup.enabled and sc.mac == "ptdma"
        self.sleep_state = RadioState.WAKEUP_LISTEN if self.wakeup_radio else RadioState.SLEEP
        self.medium = Medium(keep_us=4 * max(self.airtime, 1) + 100_000)
        self.ledger = EnergyLedger([x.id for x in self.nodes], sc.energy, initial=RadioState.SLEEP)
        self.packets: list[Packet] = []
        self.channel_rng = eng.stream("channel")
        self.cca_log: list[tuple[int, str, float, bool, tuple[str, ...]]] | None = [] if record_cca else None
        self.tx_log: list[Transmission] | None = [] if record_tx else None

        self.coordinator_collisions = 0
        self.false_wakeups = 0
        self.wakeup_misses = 0
        self.sessions = SessionTable({s.id for s in self.sensors})
        self.ondemand_rejected = 0
        self.mac = make_mac(self)
        for node in self.nodes:
            self.set_base(node, self.sleep_state)

    # ---- radio bookkeeping -------------------------------------------------

    def refresh(self, node: NodeRt) -> None:
        if node.tx:
            s = RadioState.TRANSMIT
        elif node.cca:
            s = RadioState.CCA_SENSE
        elif node.rx:
            s = RadioState.RECEIVE
        elif node.hold and node.base in SLEEPING:
            s = node.hold_state
        else:
            s = node.base
        if s is not node.state:
            node.state = s
            self.ledger.accrue_state(node.id, s, self.engine.now)

    def set_base(self, node: NodeRt, state: RadioState) -> None:
        node.base = state
        self.refresh(node)

    def listen_for(self, node: NodeRt, duration: int) -> None:
        node.rx += 1
        self.refresh(node)
        self.engine.schedule(self.engine.now + duration, self._unlisten, node, target=node.id)

    def _unlisten(self, node: NodeRt) -> None:
        node.rx -= 1
        self.refresh(node)

    def hold_awake(self, node: NodeRt, delta: int) -> None:
        node.hold += delta
        self.refresh(node)

    # ---- medium --------------------------------------------------------------

    def start_tx(self, src: NodeRt, dst: NodeRt | None, kind: str, duration: int, packet: Packet | None = None) -> Transmission:
        now = self.engine.now
        tx = Transmission(src.index, BROADCAST if dst is None else dst.index, now, now + duration, kind, packet)
        self.medium.add(tx)
        if self.tx_log is not None:
            self.tx_log.append(tx)
        src.tx += 1
        self.refresh(src)
        if dst is not None and dst.awake and not dst.tx:
            dst.rx += 1
            tx.rx_counted = True
            self.refresh(dst)
        return tx

    def end_tx(self, tx: Transmission) -> str:
        src = self.nodes[tx.src]
        src.tx -= 1
        self.refresh(src)
        if tx.dst == BROADCAST:
            return "delivered"
        dst = self.nodes[tx.dst]
        if not tx.rx_counted:
            return "link"
        dst.rx -= 1
        self.refresh(dst)
        others = self.medium.overlapping(tx.start, tx.end, exclude=tx)
        if any(o.src == tx.dst for o in others):
            status = "collision"
        else:
            g = self.gain
            out = resolve_reception(g[tx.src][tx.dst], [g[o.src][tx.dst] for o in others], self.params)
            status = _STATUS[out.status]
        if status == "delivered" and self.params.loss_prob and self.channel_rng.random() < self.params.loss_prob:
            status = "link"
        if status == "collision" and tx.dst == 0:
            self.coordinator_collisions += 1
        return status

    def sense(self, node: NodeRt, t0: int, t1: int):
        overlapping = [o for o in self.medium.overlapping(t0, t1) if o.src != node.index]
        result = cca_from_rx_powers([self.gain[o.src][node.index] for o in overlapping], self.params)
        if self.cca_log is not None:
            self.cca_log.append(
                (t1, node.id, result.sensed_power_dbm, result.busy, tuple(self.nodes[o.src].id for o in overlapping))
            )
        return result

    # ---- data exchange -------------------------------------------------------

    def exchange(self, node: NodeRt, pkt: Packet, done: Callable, ctx=None) -> None:
        """Data frame to the coordinator followed by an immediate ACK.

        ``done(node, ok, ctx)`` runs when the ACK arrives or times out.
        """
        pkt.attempts += 1
        tx = self.start_tx(node, self.coord, "data", self.airtime, pkt)
        self.engine.schedule(tx.end, self._data_end, node, tx, done, ctx, kind=EventKind.TX_END, target=node.id)

    def _data_end(self, node, tx, done, ctx) -> None:
        status = self.end_tx(tx)
        node.rx += 1  # waiting for the ACK
        self.refresh(node)
        now = self.engine.now
        if status == "delivered":
            self.on_delivered(tx.packet)
            self.engine.schedule(now + self.radio.turnaround_us, self._ack_start, node, done, ctx, now,
                                 kind=EventKind.TIMER, target=COORDINATOR)
        else:
            node.last_fail = status
            self.engine.schedule(now + self.radio.ack_timeout_us, self._ack_timeout, node, done, ctx,
                                 kind=EventKind.TIMER, target=node.id)

    def _ack_start(self, node, done, ctx, data_end) -> None:
        tx = self.start_tx(self.coord, node, "ack", self.ack_air)
        self.engine.schedule(tx.end, self._ack_end, node, tx, done, ctx, data_end, kind=EventKind.TX_END,
                             target=COORDINATOR)

    def _ack_end(self, node, tx, done, ctx, data_end) -> None:
        status = self.end_tx(tx)
        if status == "delivered":
            node.rx -= 1
            self.refresh(node)
            done(node, True, ctx)
        else:
            node.last_fail = status
            self.engine.schedule(data_end + self.radio.ack_timeout_us, self._ack_timeout, node, done, ctx,
                                 kind=EventKind.TIMER, target=node.id)

    def _ack_timeout(self, node, done, ctx) -> None:
        node.rx -= 1
        self.refresh(node)
        done(node, False, ctx)

    def finish_attempt(self, node: NodeRt, ok: bool) -> None:
        """Retire the head packet after a successful or exhausted exchange."""
        pkt = node.queue[0]
        if ok:
            node.queue.popleft()
            self.settle(pkt, "delivered")
            self.refill(node)
        elif pkt.attempts > self.radio.max_retries:
            node.queue.popleft()
            self.settle(pkt, node.last_fail)
            self.refill(node)

    def drop_head(self, node: NodeRt, reason: str) -> None:
        pkt = node.queue.popleft()
        self.settle(pkt, reason)
        self.refill(node)

    # ---- packets -------------------------------------------------------------

    def new_packet(self, node: NodeRt, cls: TrafficClass) -> Packet:
        pkt = Packet(len(self.packets), node.id, COORDINATOR, cls, self.payload_bits, self.engine.now)
        self.packets.append(pkt)
        return pkt

    def enqueue(self, node: NodeRt, pkt: Packet, front: bool = False) -> None:
        q = node.queue
        if len(q) >= node.traffic.queue_capacity:
            # Oldest packet that is not currently being served.
            victim_index = 1 if node.busy else 0
            if victim_index < len(q):
                victim = q[victim_index]
                del q[victim_index]
                self.settle(victim, "overflow")
            else:
                self.settle(pkt, "overflow")
                return
        if front:
            q.insert(1 if node.busy and q else 0, pkt)
        else:
            q.append(pkt)
        self.mac.on_enqueue(node)

    def settle(self, pkt: Packet, fate: str) -> None:
        if pkt.fate is None:
            pkt.fate = fate
            if fate == "delivered":
                pkt.delivered_at = self.engine.now
        if pkt.cls is TrafficClass.EMERGENCY and fate != "delivered":
            self._emergency_resolved(pkt)

    def on_delivered(self, pkt: Packet) -> None:
        """First successful reception at the coordinator settles the packet."""
        if pkt.fate is not None:
            return
        pkt.fate = "delivered"
        pkt.delivered_at = self.engine.now
        if pkt.cls is TrafficClass.EMERGENCY:
            self._emergency_resolved(pkt)
        elif pkt.cls in (TrafficClass.ONDEMAND_CONTINUOUS, TrafficClass.ONDEMAND_NONCONTINUOUS):
            session = self.sessions.get(pkt.source)
            if session is not None and session.on_delivery(self.engine.now):
                self.mac.on_session_end(self.by_id[pkt.source], session)

    def refill(self, node: NodeRt) -> None:
        if node.traffic.saturated and not node.queue and self.engine.now < self.sc.duration_us:
            self.enqueue(node, self.new_packet(node, TrafficClass.NORMAL))

    def _arrival(self, node: NodeRt) -> None:
        self.enqueue(node, self.new_packet(node, TrafficClass.NORMAL))

    def schedule_arrivals(self, node: NodeRt, times, offset: int = 0) -> None:
        end = self.sc.duration_us
        for t in times:
            at = offset + t
            if at >= end:
                break
            self.engine.schedule(at, self._arrival, node, kind=EventKind.ARRIVAL, target=node.id)

    # ---- emergency -----------------------------------------------------------

    def _setup_emergency(self) -> None:
        cfg = self.sc.emergency
        for name in cfg.nodes:
            node = self.by_id[name]
            node.detector = EmergencyDetector(name, cfg, self.sc.wakeup, self.sc.coordinator_channel)
            trace = generate_emergency(cfg, self.sc.duration_us, self.engine.stream("emergency/" + name))
            for t, reading in trace:
                if reading > cfg.threshold:
                    self.engine.schedule(t, self._reading, node, reading, kind=EventKind.TIMER, target=name)

    def _population(self) -> dict[str, int]:
        pop = {COORDINATOR: self.sc.coordinator_channel}
        pop.update({s.id: s.spec.wakeup_channel for s in self.sensors})
        return pop

    def _reading(self, node: NodeRt, reading: float) -> None:
        event = node.detector.observe(reading, self.engine.now)
        if event is None:
            return
        pkt = self.new_packet(node, TrafficClass.EMERGENCY)
        self.enqueue(node, pkt, front=True)
        if not self.wakeup_radio:
            return
        self._send_wakeup(node, event.signal)
        self.engine.schedule(self.engine.now + event.signal.duration_us, self._emergency_signalled, node,
                             kind=EventKind.WAKEUP, target=node.id)

    def _emergency_signalled(self, node: NodeRt) -> None:
        if node.detector.unresolved:
            self.mac.on_emergency(node)

    def _emergency_resolved(self, pkt: Packet) -> None:
        node = self.by_id[pkt.source]
        if node.detector is not None:
            node.detector.resolve()

    def _send_wakeup(self, sender: NodeRt, signal: WakeupSignal):
        """Charge the sender for the signal and the false wake-ups it causes."""
        sender.tx += 1
        self.refresh(sender)
        self.engine.schedule(self.engine.now + signal.duration_us, self._wakeup_tx_end, sender,
                             kind=EventKind.WAKEUP, target=sender.id)
        delivery = deliver_wakeup(signal, self._population())
        self.false_wakeups += delivery.false_wakeups
        if not delivery.delivered:
            self.wakeup_misses += 1
        listen = self.sc.wakeup.false_wake_listen_us
        if listen:
            for name in sorted(delivery.woken - delivery.intended):
                self.listen_for(self.by_id[name], listen)
        return delivery

    def _wakeup_tx_end(self, sender: NodeRt) -> None:
        sender.tx -= 1
        self.refresh(sender)

    # ---- on-demand -----------------------------------------------------------

    def _setup_ondemand(self) -> None:
        for req in self.sc.ondemand.requests:
            if req.at_us < self.sc.duration_us:
                self.engine.schedule(req.at_us, self._request, req, kind=EventKind.WAKEUP, target=req.target)

    def _request(self, req) -> None:
        try:
            session = self.sessions.on_demand_request(req.target, req.kind, req.amount)
        except SessionError:
            self.ondemand_rejected += 1
            return
        if not self.wakeup_radio:
            session.stop(self.engine.now)
            self.ondemand_rejected += 1
            return
        target = self.by_id[req.target]
        purpose = Purpose.ONDEMAND_CONTINUOUS if req.kind is SessionKind.CONTINUOUS else Purpose.ONDEMAND_NONCONTINUOUS
        signal = WakeupSignal(
            COORDINATOR, req.target, self.sc.wakeup.mode, purpose, self.sc.wakeup.signal_us,
            channel=target.spec.wakeup_channel if self.sc.wakeup.mode is WakeupMode.ADDRESSED else None,
            count=req.amount if req.kind is SessionKind.NONCONTINUOUS else 1,
        )
        delivery = self._send_wakeup(self.coord, signal)
        if delivery.delivered:
            self.engine.schedule(self.engine.now + signal.duration_us, self._session_start, target, session, req,
                                 kind=EventKind.WAKEUP, target=target.id)
        else:
            session.stop(self.engine.now)

    def _session_start(self, node: NodeRt, session, req) -> None:
        session.start(self.engine.now)
        self.mac.on_session_start(node, session)
        if req.kind is SessionKind.NONCONTINUOUS:
            for _ in range(req.amount):
                self.enqueue(node, self.new_packet(node, TrafficClass.ONDEMAND_NONCONTINUOUS))
        else:
            self._stream(node, session, req.amount)

    def _stream(self, node: NodeRt, session, stop_at: int) -> None:
        now = self.engine.now
        if now >= stop_at or not session.active:
            if session.active:
                session.stop(now)
                self.mac.on_session_end(node, session)
            return
        self.enqueue(node, self.new_packet(node, TrafficClass.ONDEMAND_CONTINUOUS))
        nxt = min(now + self.sc.ondemand.stream_interval_us, stop_at)
        if nxt < self.sc.duration_us:
            self.engine.schedule(nxt, self._stream, node, session, stop_at, kind=EventKind.ARRIVAL, target=node.id)

    # ---- run -----------------------------------------------------------------

    def run(self) -> MetricsReport:
        duration = self.sc.duration_us
        self.mac.start()
        if duration > 0:
            self._setup_emergency()
            self._setup_ondemand()
            for node in self.sensors:
                self.refill(node)
        self.engine.run(duration)
        self.ledger.close(duration)
        return summarize(
            self.ledger,
            self.packets,
            scenario=self.sc.name,
            mac=self.sc.mac,
            seed=self.seed,
            duration_us=duration,
            coordinator=COORDINATOR,
            deadline_us=self.sc.emergency.deadline_us,
            false_wakeups=self.false_wakeups,
            coordinator_collisions=self.coordinator_collisions,
            gts_denied=getattr(self.mac, "gts_denied", 0),
            ondemand_rejected=self.ondemand_rejected,
            events=self.engine.processed,
        )


def simulate(scenario: Scenario, seed: int | None = None, **kwargs) -> Network:
    net = Network(scenario, scenario.seeds[0] if seed is None else seed, **kwargs)
    net.report = net.run()
    return net


def run_scenario(scenario: Scenario, seed: int | None = None) -> MetricsReport:
    return simulate(scenario, seed).report
