import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bsnmac.channel import (
    CcaVerdict,
    ChannelParams,
    LinkGeometry,
    ReceptionStatus,
    assess_channel,
    cca_from_rx_powers,
    dbm_to_mw,
    path_loss_db,
    resolve_reception,
    rx_power_dbm,
)
from bsnmac.common import Placement

P = ChannelParams()
IN, ON = Placement.IN_BODY, Placement.ON_BODY

# Hand-evaluated log-distance values (defaults: 40 dB at 0.1 m, n=3.5, tissue 35 dB, n_in=6).
# Implant 5 cm deep, 3 m away: 40 + 35*log10(30) + 35 + 60*log10(1.5)
IMPLANT_3M_5CM_DB = 40 + 51.6993 + 35 + 10.5655
# On-body 1 m: 40 + 35*log10(10)
ONBODY_1M_DB = 75.0


def test_reference_distance_identity():
    assert path_loss_db(LinkGeometry(P.d0_m), P) == P.pl0_db


def test_doubling_distance_adds_6_02_db():
    p = ChannelParams(exp_onbody=2.0)
    delta = path_loss_db(LinkGeometry(2.0), p) - path_loss_db(LinkGeometry(1.0), p)
    assert delta == pytest.approx(6.0206, abs=1e-4)


def test_implant_to_far_onbody_link():
    pl = path_loss_db(LinkGeometry(3.0, IN, ON, 0.05), P)
    assert pl == pytest.approx(IMPLANT_3M_5CM_DB, abs=1e-3)
    assert rx_power_dbm(0.0, LinkGeometry(3.0, IN, ON, 0.05), P) < P.cca_threshold_dbm


def test_surface_term_counted_per_inbody_endpoint():
    one = path_loss_db(LinkGeometry(1.0, IN, ON, 0.05), P)
    two = path_loss_db(LinkGeometry(1.0, IN, IN, 0.05), P)
    assert two - one == pytest.approx(35 + 60 * math.log10(1.5))


def test_geometry_validation():
    with pytest.raises(ValueError):
        LinkGeometry(0.0)
    with pytest.raises(ValueError):
        LinkGeometry(-1.0)
    with pytest.raises(ValueError):
        LinkGeometry(0.05, IN, ON, 0.1)


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(exp_onbody=0)
    with pytest.raises(ValueError):
        ChannelParams(d0_m=0)
    with pytest.raises(ValueError):
        ChannelParams(cca_threshold_dbm=math.inf)


def test_quiet_channel_is_idle():
    r = assess_channel([], P)
    assert r.verdict is CcaVerdict.IDLE
    assert r.sensed_power_dbm == pytest.approx(-100.0)


def test_hidden_implant_is_idle():
    r = assess_channel([(0.0, LinkGeometry(3.0, IN, ON, 0.05))], P)
    assert r.verdict is CcaVerdict.IDLE
    assert r.sensed_power_dbm < -85


def test_onbody_neighbour_at_1m_is_busy():
    r = assess_channel([(0.0, LinkGeometry(1.0))], P)
    expected = 10 * math.log10(10 ** (-ONBODY_1M_DB / 10) + 10 ** (-100 / 10))
    assert r.sensed_power_dbm == pytest.approx(expected, abs=1e-9)
    assert r.sensed_power_dbm == pytest.approx(-75.0, abs=0.05)
    assert r.busy


def test_cca_flips_exactly_at_threshold():
    geom = LinkGeometry(1.0)
    lo, hi = -40.0, 0.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if assess_channel([(mid, geom)], P).busy:
            hi = mid
        else:
            lo = mid
    assert assess_channel([(lo, geom)], P).sensed_power_dbm < -85 <= assess_channel([(hi, geom)], P).sensed_power_dbm
    assert hi - lo < 1e-9
    # The threshold itself counts as busy.
    assert cca_from_rx_powers([], ChannelParams(cca_threshold_dbm=-100.0)).busy


@given(st.floats(-30, 10), st.floats(-30, 10), st.floats(0.2, 5), st.floats(0.2, 5))
def test_energy_domain_additivity(p1, p2, d1, d2):
    g1, g2 = LinkGeometry(d1), LinkGeometry(d2)
    both = dbm_to_mw(assess_channel([(p1, g1), (p2, g2)], P).sensed_power_dbm)
    noise = dbm_to_mw(P.noise_floor_dbm)
    a = dbm_to_mw(assess_channel([(p1, g1)], P).sensed_power_dbm) - noise
    b = dbm_to_mw(assess_channel([(p2, g2)], P).sensed_power_dbm) - noise
    assert both == pytest.approx(a + b + noise, rel=1e-9)


@given(st.floats(0.1, 10), st.floats(0.0, 1.0), st.floats(0.0, 0.1), st.sampled_from([IN, ON]))
def test_monotone_in_distance_and_depth(d, extra, depth, place):
    depth = min(depth, d) if place is IN else 0.0
    base = path_loss_db(LinkGeometry(d, place, ON, depth), P)
    assert path_loss_db(LinkGeometry(d + extra, place, ON, depth), P) >= base
    if place is IN:
        deeper = min(depth + extra, d)
        assert path_loss_db(LinkGeometry(d, place, ON, deeper), P) >= base


@pytest.mark.parametrize("depth_cm", range(1, 11))
@pytest.mark.parametrize("tx_dbm", [0.0, -5.0, -20.0])
def test_hidden_implant_sweep(depth_cm, tx_dbm):
    for dist in (3.0, 3.5, 5.0):
        r = assess_channel([(tx_dbm, LinkGeometry(dist, IN, ON, depth_cm / 100))], P)
        assert r.verdict is CcaVerdict.IDLE


def test_reception_outcomes():
    assert resolve_reception(-60.0, [], P).status is ReceptionStatus.DELIVERED
    assert resolve_reception(-96.0, [], P).status is ReceptionStatus.LOST_BELOW_SENSITIVITY
    # Equal powers: each one destroys the other.
    assert resolve_reception(-60.0, [-60.0], P).status is ReceptionStatus.LOST_COLLISION
    # 15 dB weaker interferer is captured away; exactly 10 dB weaker still collides.
    assert resolve_reception(-60.0, [-75.0], P).status is ReceptionStatus.DELIVERED
    assert resolve_reception(-60.0, [-70.0], P).status is ReceptionStatus.LOST_COLLISION
    assert resolve_reception(-60.0, [-75.0, -69.9], P).status is ReceptionStatus.LOST_COLLISION
