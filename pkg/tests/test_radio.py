import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avnet.radio import (
    WIFI_SLICE,
    ReusePattern,
    achievable_rate_bps,
    build_reuse_pattern,
    dbm_to_mw,
    dump_link_quality_csv,
    efficiency_from_sinr,
    link_quality,
    link_table,
    mw_to_dbm,
    pathloss_db,
    received_power_dbm,
    reuse_is_legal,
    reuse_structure,
    sinr,
    slice_ids,
    spectral_efficiency,
)
from avnet.scenario import BsKind, MecServer

from helpers import ap, av, enb, scenario


def test_pathloss_enb_at_one_metre():
    assert pathloss_db(enb("S1", 0.0), 1.0) == pytest.approx(-30.0)


def test_received_power_enb_100m():
    b = enb("S1", 0.0)
    assert pathloss_db(b, 100.0) == pytest.approx(-100.0, abs=1e-12)
    assert received_power_dbm(b, 100.0) == pytest.approx(-60.0, abs=0.01)


def test_received_power_ap_50m():
    b = ap("AP1", 0.0)
    assert pathloss_db(b, 50.0) == pytest.approx(-40.0 - 35.0 * math.log10(50.0))
    assert pathloss_db(b, 50.0) == pytest.approx(-99.46, abs=0.01)
    assert received_power_dbm(b, 50.0) == pytest.approx(-71.01, abs=0.01)


def test_distance_floor_and_domain():
    b = enb("S1", 0.0)
    assert pathloss_db(b, 0.25) == pathloss_db(b, 1.0)
    for d in (0.0, -3.0):
        with pytest.raises(ValueError):
            pathloss_db(b, d)


@given(st.floats(-200.0, 100.0))
def test_dbm_round_trip(x):
    assert abs(mw_to_dbm(dbm_to_mw(x)) - x) < 1e-9


def _single_enb(x_av=100.0):
    # BS on the lane line so the AV is exactly x_av metres away
    s = scenario([enb("S1", 0.0, y=1.75)], [av(0, x_av)])
    return s, build_reuse_pattern(s, s.mec_servers[0], [1.0])


def test_single_enb_sinr_44db():
    s, rp = _single_enb()
    g = sinr(s, rp, "S1", 0, "S1")
    assert 10 * math.log10(g) == pytest.approx(44.0, abs=1e-9)
    assert spectral_efficiency(s, rp, "S1", 0, "S1") == pytest.approx(math.log2(1 + 10**4.4))
    assert spectral_efficiency(s, rp, "S1", 0, "S1") == pytest.approx(14.62, abs=0.01)


def test_twin_aps_equidistant():
    s = scenario([enb("S1", 500.0), ap("A1", 100.0, y=1.75), ap("A2", 300.0, y=1.75)], [av(0, 200.0)])
    rp = build_reuse_pattern(s, s.mec_servers[0], [0.5, 0.5])
    g = sinr(s, rp, "A1", 0, WIFI_SLICE)
    p = dbm_to_mw(received_power_dbm(s.bs("A1"), 100.0))
    n = dbm_to_mw(-104.0)
    assert g == pytest.approx(p / (n + p))
    assert g < 1 and 10 * math.log10(g) == pytest.approx(0.0, abs=0.05)


def test_efficiency_examples():
    assert efficiency_from_sinr(0.8, 1.0) == pytest.approx(0.8)
    assert efficiency_from_sinr(1.0, 1e-12) == pytest.approx(0.0, abs=1e-11)
    assert efficiency_from_sinr(1.0, 0.0) == 0.0


def test_sinr_rejects_foreign_slice(road_012):
    rp = build_reuse_pattern(road_012, road_012.mec_servers[0], [1 / 3] * 3)
    with pytest.raises(ValueError):
        sinr(road_012, rp, "S1", 0, "S2")


def test_case_study_reuse_structure(road_012):
    st_ = reuse_structure(road_012, road_012.mec_servers[0])
    assert slice_ids(road_012, road_012.mec_servers[0]) == ("S1", "S2", WIFI_SLICE)
    assert st_["S1"] == {"S1"} and st_["S2"] == {"S2"}
    for a in ("AP1", "AP2", "AP3"):
        assert st_[a] == {WIFI_SLICE, "S2"}
    for a in ("AP4", "AP5", "AP6"):
        assert st_[a] == {WIFI_SLICE, "S1"}


def test_ap4_on_s1_slice_sees_no_s1_interference(road_012):
    # S1 does not transmit on its own slice inside AP4's cell under this pattern
    rp = build_reuse_pattern(road_012, road_012.mec_servers[0], [0.3, 0.3, 0.4])
    v = min(road_012.vehicles, key=lambda v: abs(v.position_m[0] - 585.0))
    d = lambda b: math.dist(road_012.bs(b).position_m, v.position_m)
    p = lambda b: dbm_to_mw(received_power_dbm(road_012.bs(b), d(b)))
    others = [b for b in ("AP5", "AP6", "S1") if "S1" in rp.bs_slices[b] and d(b) <= 2 * road_012.bs(b).range_m]
    expect = p("AP4") / (dbm_to_mw(-104.0) + sum(p(b) for b in others))
    assert sinr(road_012, rp, "AP4", v.id, "S1") == pytest.approx(expect)
    rp2 = ReusePattern(rp.slices, {**rp.bs_slices, "S1": frozenset({"S1"})})
    no_s1 = p("AP4") / (dbm_to_mw(-104.0) + sum(p(b) for b in others if b != "S1"))
    assert "S1" in others  # S1 is a co-channel interferer of its own slice
    assert no_s1 > expect


def test_reuse_legality(config, road_012):
    for beta in ([1 / 3] * 3, [0.1, 0.2, 0.7]):
        rp = build_reuse_pattern(road_012, road_012.mec_servers[0], beta)
        assert reuse_is_legal(road_012, rp)
    bad = ReusePattern(rp.slices, {**rp.bs_slices, "AP3": frozenset({WIFI_SLICE, "S1"})})
    assert not reuse_is_legal(road_012, bad)


def test_pattern_ratios_must_sum_to_one(road_012):
    with pytest.raises(ValueError):
        build_reuse_pattern(road_012, road_012.mec_servers[0], [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        build_reuse_pattern(road_012, road_012.mec_servers[0], [0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(x_int=st.floats(0.0, 1000.0), x_av=st.floats(0.0, 1000.0))
def test_adding_interferer_never_raises_sinr(x_int, x_av):
    base = [enb("S1", 500.0), ap("A1", x_av, y=5.0)]
    s1 = scenario(base, [av(0, x_av)])
    s2 = scenario(base + [ap("A2", x_int)], [av(0, x_av)])
    g1 = sinr(s1, build_reuse_pattern(s1, s1.mec_servers[0], [0.5, 0.5]), "A1", 0, WIFI_SLICE)
    g2 = sinr(s2, build_reuse_pattern(s2, s2.mec_servers[0], [0.5, 0.5]), "A1", 0, WIFI_SLICE)
    assert g2 <= g1


def test_link_table_matches_scalar(road_012):
    m = road_012.mec_servers[0]
    t = link_table(road_012, m)
    rp = build_reuse_pattern(road_012, m, [1 / 3] * 3)
    for k in range(0, len(t.av_ids), 7):
        for j, b in enumerate(t.bs_ids):
            for si, sid in enumerate(t.slice_ids):
                if t.cover[j, k] and sid in rp.bs_slices[b]:
                    assert t.eff[j, k, si] == pytest.approx(
                        spectral_efficiency(road_012, rp, b, t.av_ids[k], sid), rel=1e-9)
                else:
                    assert t.eff[j, k, si] == 0.0


def test_link_quality_and_dump(road_012):
    m = road_012.mec_servers[0]
    rp = build_reuse_pattern(road_012, m, [1 / 3] * 3)
    lq = link_quality(road_012, rp, "AP2", road_012.vehicles[0].id)
    for sid, e in lq.spectral_eff_per_slice.items():
        assert e == pytest.approx(0.8 * math.log2(1 + 10 ** (lq.sinr_db_per_slice[sid] / 10)))
        assert e >= 0
    buf = io.StringIO()
    dump_link_quality_csv(buf, road_012, rp)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "bs_id,av_id,slice_id,sinr_db,eff"
    assert len(lines) > len(road_012.vehicles)


def test_achievable_rate_pools_slices(road_012):
    m = road_012.mec_servers[0]
    rp = build_reuse_pattern(road_012, m, [0.2, 0.3, 0.5])
    v = road_012.vehicles[3].id
    expect = sum(rp.ratio(sid) * 25e6 * spectral_efficiency(road_012, rp, "AP5", v, sid)
                 for sid in ("S1", WIFI_SLICE))
    assert achievable_rate_bps(road_012, rp, "AP5", v, 25e6) == pytest.approx(expect)


def test_common_power_offset_keeps_max_sinr_choice(road_012):
    from dataclasses import replace

    from avnet.slicing import SlicingProblem

    shifted = replace(
        road_012,
        base_stations=tuple(replace(b, tx_power_dbm=b.tx_power_dbm + 7.0) for b in road_012.base_stations),
        noise_dbm=road_012.noise_dbm + 7.0,
    )
    m = road_012.mec_servers[0]
    a = SlicingProblem(road_012, m).max_sinr_association()
    b = SlicingProblem(shifted, m).max_sinr_association()
    assert np.array_equal(a, b)
