import csv
import io
import json

import pytest

from bsnmac.metrics import (
    CSV_COLUMNS,
    EnergyLedger,
    LedgerError,
    PowerProfile,
    RadioState,
    class_stats,
    summarize,
    to_csv,
)
from bsnmac.common import ConfigError
from bsnmac.network import simulate
from bsnmac.scenario import bundled
from bsnmac.traffic import Packet, TrafficClass
from conftest import ptdma_text, scenario

P = PowerProfile()


def test_power_profile_ordering():
    with pytest.raises(ConfigError):
        PowerProfile(wakeup_listen_mw=50.0)
    with pytest.raises(ConfigError):
        PowerProfile(sleep_mw=0.2)


def test_single_interval_identity():
    led = EnergyLedger(["a"], P)
    led.close(1_000_000)
    assert led.energy_mj("a") == pytest.approx(P.sleep_mw * 1.0)
    assert led.sleep_ratio("a") == 1.0


def test_tiling_and_energy():
    led = EnergyLedger(["a"], P)
    led.accrue_state("a", RadioState.TRANSMIT, 300)
    led.accrue_state("a", RadioState.SLEEP, 500)
    led.close(1_000)
    d = led.durations["a"]
    assert (d[RadioState.SLEEP], d[RadioState.TRANSMIT]) == (800, 200)
    assert led.total_time("a") == 1_000
    assert led.energy_mj("a") == pytest.approx((800 * P.sleep_mw + 200 * P.transmit_mw) * 1e-6)


def test_time_regression_is_fatal():
    led = EnergyLedger(["a"], P)
    led.accrue_state("a", RadioState.RECEIVE, 10)
    with pytest.raises(LedgerError, match="corruption"):
        led.accrue_state("a", RadioState.SLEEP, 9)


def _pkt(i, fate, created=0, delivered=None, cls=TrafficClass.NORMAL):
    p = Packet(i, "a", "coord", cls, 100, created)
    p.fate, p.delivered_at = fate, delivered
    return p


def test_class_stats():
    pkts = [_pkt(i, "delivered", 0, 10 * (i + 1)) for i in range(10)]
    s = class_stats(pkts)
    assert s.pdr == 1.0
    assert s.lat_mean_us == 55.0 and s.lat_max_us == 100
    mixed = pkts[:3] + [_pkt(10, "access"), _pkt(11, "overflow"), _pkt(12, None)]
    s = class_stats(mixed)
    assert (s.delivered, s.drop_access, s.drop_overflow, s.pending) == (3, 1, 1, 1)
    assert s.delivered + s.dropped + s.pending == s.generated
    # Undelivered packets never reach the latency statistics.
    assert s.lat_max_us == 30


def test_deadline_misses():
    led = EnergyLedger(["coord"], P)
    led.close(5_000_000)
    pkts = [
        _pkt(0, "delivered", 0, 999_999, TrafficClass.EMERGENCY),
        _pkt(1, "delivered", 0, 1_000_000, TrafficClass.EMERGENCY),
        _pkt(2, "collision", 0, None, TrafficClass.EMERGENCY),
        _pkt(3, None, 4_500_000, None, TrafficClass.EMERGENCY),
        _pkt(4, None, 3_000_000, None, TrafficClass.EMERGENCY),
    ]
    rep = summarize(led, pkts, scenario="s", mac="ptdma", seed=1, duration_us=5_000_000,
                    coordinator="coord", deadline_us=1_000_000)
    assert rep.deadline_misses == 3
    assert rep.emergencies == 5


def test_table2_coordinator_never_sleeps():
    rep = simulate(bundled("table2"), 1).report
    assert rep.coord_sleep_ratio == 0.0


def test_two_zero_columns_sleep_two_thirds():
    sc = scenario(ptdma_text(["010", "010", "010"], duration_us=900_000, extra="[traffic]\nrate = 0\n"))
    net = simulate(sc, 1)
    led = net.ledger
    assert led.sleep_time("coord") * 3 == 2 * led.total_time("coord")


def test_csv_columns_and_format():
    rep = simulate(bundled("table2"), 1).report
    text = to_csv([rep])
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[1][:4] == ["table2", "ptdma", "1", "all"]
    assert rows[1][CSV_COLUMNS.index("pdr")] == "1.000000"
    doc = json.loads(rep.to_json())
    assert doc["classes"]["all"]["generated"] == 40
    assert doc["energy_mj_total"] == pytest.approx(rep.energy_mj_total)


def test_coordinator_saves_energy_under_patterns():
    for patterns in (["011", "100", "010"], ["010", "010", "010"], ["100", "000", "100"], ["11", "11"]):
        all_ones = all(any(p[f] == "1" for p in patterns) for f in range(len(patterns[0])))
        for rate in ("0", "1"):
            sc = scenario(ptdma_text(patterns, duration_us=1_800_000, extra=f"[traffic]\nrate = {rate}\n"))
            pt = simulate(sc, 1).ledger.energy_mj("coord")
            always_on = sc.energy.receive_mw * sc.duration_us * 1e-6
            assert pt <= always_on + 1e-9
            if rate == "0":
                assert (pt == pytest.approx(always_on)) if all_ones else (pt < always_on)


def test_energy_monotone_in_duty_cycle():
    prev = None
    for listen in (50_000, 115_000, 300_000, 600_000):
        text = ("[scenario]\nmac = smac\nduration_us = 3000000\n[traffic]\nrate_hz = 0\n"
                f"[smac]\nlisten_us = {listen}\nsleep_us = {1_000_000 - listen}\n[node.a]\n")
        e = simulate(scenario(text), 1).ledger.energy_mj("a")
        assert prev is None or e >= prev
        prev = e
