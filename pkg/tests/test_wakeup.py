import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsnmac.common import ConfigError
from bsnmac.network import simulate
from bsnmac.wakeup import (
    EmergencyConfig,
    EmergencyDetector,
    Purpose,
    SessionError,
    SessionKind,
    SessionTable,
    WakeupConfig,
    WakeupMode,
    WakeupSignal,
    deliver_wakeup,
    emergency_trigger,
)
from conftest import ptdma_text, scenario


def test_threshold_is_strict():
    det = EmergencyDetector("a", EmergencyConfig(threshold=3.0))
    assert emergency_trigger(det, 3.0, 0) is None
    ev = emergency_trigger(det, 3.0 + 1e-9, 10)
    assert ev is not None and ev.node == "a" and ev.signal.purpose is Purpose.EMERGENCY


def test_retrigger_suppressed_until_resolved():
    det = EmergencyDetector("a", EmergencyConfig(threshold=1.0))
    events = [emergency_trigger(det, 5.0, t) for t in (0, 1_000)]
    assert sum(e is not None for e in events) == 1
    det.resolve()
    assert emergency_trigger(det, 5.0, 2_000) is not None
    assert det.triggers == 2


def _signal(mode, channel=None, target="n0", origin="coord"):
    return WakeupSignal(origin, target, mode, Purpose.ONDEMAND_CONTINUOUS, channel=channel)


def test_broadcast_wakes_everyone():
    pop = {f"n{i}": i + 1 for i in range(5)}
    d = deliver_wakeup(_signal(WakeupMode.BROADCAST), pop)
    assert len(d.woken) == 5 and d.false_wakeups == 4


def test_addressed_wakes_only_matching_channel():
    pop = {f"n{i}": i + 1 for i in range(5)}
    d = deliver_wakeup(_signal(WakeupMode.ADDRESSED, channel=3, target="n2"), pop)
    assert d.woken == {"n2"} and d.false_wakeups == 0
    nobody = deliver_wakeup(_signal(WakeupMode.ADDRESSED, channel=9), pop)
    assert nobody.woken == frozenset() and not nobody.delivered


@given(st.lists(st.integers(0, 4), min_size=1, max_size=8), st.integers(0, 4))
def test_addressed_iff_channels_match(channels, c):
    pop = {f"n{i}": ch for i, ch in enumerate(channels)}
    d = deliver_wakeup(_signal(WakeupMode.ADDRESSED, channel=c), pop)
    assert d.woken == {n for n, ch in pop.items() if ch == c}


def test_signal_validation():
    with pytest.raises(ConfigError):
        WakeupSignal("a", "b", WakeupMode.BROADCAST, Purpose.EMERGENCY, duration_us=0)
    with pytest.raises(ConfigError):
        WakeupSignal("a", "b", WakeupMode.BROADCAST, Purpose.ONDEMAND_NONCONTINUOUS, count=0)
    with pytest.raises(ConfigError):
        WakeupConfig(signal_us=0)


def test_session_table_rules():
    table = SessionTable({"a", "b"})
    s = table.on_demand_request("a", SessionKind.CONTINUOUS)
    s.start(0)
    with pytest.raises(SessionError):
        table.on_demand_request("a", SessionKind.NONCONTINUOUS, 3)
    with pytest.raises(SessionError):
        table.on_demand_request("zz", SessionKind.CONTINUOUS)
    assert table.rejected == 1
    k = table.on_demand_request("b", SessionKind.NONCONTINUOUS, 5)
    k.start(0)
    closed = [k.on_delivery(t) for t in range(5)]
    assert closed == [False] * 4 + [True]
    assert not k.active
    s.stop(10)
    assert table.on_demand_request("a", SessionKind.CONTINUOUS).active


# ---- simulated emergencies --------------------------------------------------

ALWAYS = "[emergency]\nthreshold = -100\nnodes = {}\n"


def test_single_emergency_latency_bound():
    text = ptdma_text(["1", "1", "1"], duration_us=200_000, extra=ALWAYS.format("n2") + "[traffic]\nrate = 0\n")
    net = simulate(scenario(text), 1)
    first = min((p for p in net.packets if p.cls.value == "emergency"), key=lambda p: p.created_at)
    sc = net.sc
    bound = sc.wakeup.signal_us + 2 * sc.ptdma.slot_duration_us
    assert first.created_at == 0
    assert first.delivered_at - first.created_at <= bound


def test_emergency_waits_for_the_slot_in_flight():
    # n0 is mid-exchange in slot 0 when n2's wake-up arrives; n2 gets slot 1.
    text = ptdma_text(["1", "1", "0"], duration_us=30_000, extra=ALWAYS.format("n2"))
    net = simulate(scenario(text), 1, record_tx=True)
    data = [(net.nodes[tx.src].id, tx.start, tx.end) for tx in net.tx_log if tx.kind == "data"]
    assert data[0] == ("n0", 0, net.airtime)
    assert data[1][:2] == ("n2", 10_000)
    # n1 owned slot 1 in this frame and yields it.
    assert not any(n == "n1" and 10_000 <= s < 20_000 for n, s, _ in data)


def test_two_simultaneous_emergencies_both_delivered():
    text = ptdma_text(["10", "01", "00"], duration_us=60_000, extra=ALWAYS.format("n1, n2") + "[traffic]\nrate = 0\n")
    for seed in range(1, 11):
        net = simulate(scenario(text), seed, record_tx=True)
        em = [p for p in net.packets if p.cls.value == "emergency" and p.created_at == 0]
        assert len(em) == 2
        assert all(p.fate == "delivered" for p in em)
        starts = sorted((tx.start, net.nodes[tx.src].id) for tx in net.tx_log if tx.kind == "data")
        assert starts[0][0] == 10_000 and starts[1][0] == 20_000
        assert net.coordinator_collisions == 0


class _ScriptedRng:
    def __init__(self, draws):
        self.draws = list(draws)

    def randrange(self, n):
        v = self.draws.pop(0)
        assert 0 <= v < n
        return v


class _Stub:
    def __init__(self, name, draws):
        self.id = name
        self.rng = _ScriptedRng(draws)


def test_emergency_order_follows_critical_backoff_exhaustively():
    text = ptdma_text(["1", "1"], duration_us=0)
    net = simulate(scenario(text), 1)
    w0 = net.sc.csma.w0_critical
    for a in range(w0):
        for b in range(w0):
            if a == b:
                # Tie: the redraw decides.
                order = net.mac._order_by_backoff([_Stub("x", [a, 5]), _Stub("y", [b, 2])])
                assert [n.id for n in order] == ["y", "x"]
                continue
            order = net.mac._order_by_backoff([_Stub("x", [a]), _Stub("y", [b])])
            assert [n.id for n in order] == (["x", "y"] if a < b else ["y", "x"])


# ---- on-demand sessions ----------------------------------------------------


def _ondemand(patterns, requests, extra="", duration=3_000_000):
    return scenario(ptdma_text(patterns, duration_us=duration,
                               extra=f"[ondemand]\nrequests = {requests}\n" + extra))


def test_noncontinuous_session_delivers_exactly_k():
    net = simulate(_ondemand(["100", "010"], "100000 n1 noncontinuous 5"), 1)
    (session,) = net.sessions.history
    od = [p for p in net.packets if p.cls.value == "ondemand_noncontinuous"]
    assert len(od) == 5 and all(p.fate == "delivered" for p in od)
    assert session.delivered == 5 and not session.active
    assert session.ended_at == max(p.delivered_at for p in od)


def test_noncontinuous_on_lossy_channel_counts_unique_deliveries():
    extra = "[channel]\nloss_prob = 0.3\n[radio]\nmax_retries = 12\n"
    net = simulate(_ondemand(["100", "010"], "100000 n1 noncontinuous 8", extra), 3)
    (session,) = net.sessions.history
    od = [p for p in net.packets if p.cls.value == "ondemand_noncontinuous"]
    assert session.delivered == 8 == sum(p.fate == "delivered" for p in od)
    assert sum(p.attempts for p in od) > 8


def test_continuous_session_then_back_to_pattern():
    # Hyperperiod 3 frames x 20 ms = 60 ms. Stream from 0.1 s to 2.11 s.
    sc = _ondemand(["100", "010"], "100000 n1 continuous 2110000", duration=3_000_000)
    net = simulate(sc, 1, record_tx=True)
    (session,) = net.sessions.history
    assert session.ended_at == 2_110_000
    hyper = 60_000
    boundary = -(-2_110_000 // hyper) * hyper
    n1 = net.by_id["n1"].index
    starts = [tx.start for tx in net.tx_log if tx.src == n1 and tx.kind == "data"]
    streamed = [s for s in starts if 100_000 <= s < 2_110_000]
    assert len(streamed) >= 60
    # During the session n1 also used frames where its pattern bit is 0.
    assert any((s % hyper) // 20_000 != 1 for s in streamed)
    # From the next hyperperiod boundary on, only its own pattern frame (frame 1, slot 1).
    assert all(30_000 <= s % hyper < 39_000 for s in starts if s >= boundary)
    od = [p for p in net.packets if p.cls.value == "ondemand_continuous"]
    assert od and all(p.fate == "delivered" for p in od)


def test_second_request_while_streaming_is_rejected():
    sc = _ondemand(["100", "010"], "100000 n1 continuous 1000000, 500000 n1 noncontinuous 2")
    net = simulate(sc, 1)
    assert net.report.ondemand_rejected == 1
    assert len(net.sessions.history) == 1


def test_broadcast_false_wakeups_in_simulation():
    extra = "[wakeup]\nmode = broadcast\n"
    sc = _ondemand(["100", "010", "001", "100"], "100000 n1 noncontinuous 1", extra)
    rep = simulate(sc, 1).report
    # Coordinator's signal wakes all four sensors; one was intended.
    assert rep.false_wakeups == 3
