import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avnet.config import DemandTable, QosTable, ScenarioConfig
from avnet.scenario import (
    AppKind,
    BsKind,
    GenerationError,
    RoadGeometry,
    Scenario,
    Vehicle,
    coverage_set,
    distance_m,
    generate_case_study,
)


def _gaps_ok(s, spacing):
    for lane in range(s.road.lanes):
        xs = np.sort([v.position_m[0] for v in s.vehicles if v.lane == lane])
        if xs.size > 1 and np.diff(xs).min() < spacing - 1e-9:
            return False
    return True


def test_density_012_gives_120_avs(road_012):
    assert len(road_012.vehicles) == 120
    n_ds = sum(v.app.kind is AppKind.DELAY_SENSITIVE for v in road_012.vehicles)
    # binomial(120, 0.8): mean 96, sd ~4.4
    assert abs(n_ds - 96) < 5 * math.sqrt(120 * 0.8 * 0.2)


def test_fixed_infrastructure(road_012):
    kinds = [b.kind for b in road_012.base_stations]
    assert kinds.count(BsKind.ENB) == 2
    assert kinds.count(BsKind.WIFI_AP) == 6


def test_same_seed_is_byte_identical(config):
    a = generate_case_study(0.2, 42, config).to_json()
    b = generate_case_study(0.2, 42, config).to_json()
    assert a == b
    assert generate_case_study(0.2, 43, config).to_json() != a


def test_saturated_single_lane_lattice():
    cfg = ScenarioConfig(road=RoadGeometry(length_m=100.0, lanes=1), min_spacing_m=5.0)
    s = generate_case_study(0.2, 3, cfg)
    xs = np.sort([v.position_m[0] for v in s.vehicles])
    assert xs.size == 20
    assert np.diff(xs).min() >= 5.0 - 1e-9


def test_overfull_lane_names_the_lane():
    cfg = ScenarioConfig(road=RoadGeometry(length_m=100.0, lanes=1), min_spacing_m=5.0)
    with pytest.raises(GenerationError, match="lane 0"):
        generate_case_study(0.4, 3, cfg)


@pytest.mark.parametrize("density", [0.1, 0.41, -1.0])
def test_density_out_of_range(config, density):
    with pytest.raises(ValueError):
        generate_case_study(density, 0, config)


@settings(max_examples=25, deadline=None)
@given(density=st.floats(0.12, 0.40), seed=st.integers(0, 2**64 - 1))
def test_generated_invariants(config, density, seed):
    s = generate_case_study(density, seed, config)
    assert abs(len(s.vehicles) - density * s.road.length_m) <= 1
    assert _gaps_ok(s, config.min_spacing_m)
    for v in s.vehicles:
        assert coverage_set(s, v)
        if v.latency_threshold_s is not None:
            assert v.latency_threshold_s <= v.response_threshold_s
        assert (v.compute_demand == 0) == (v.workload_cycles == 0)


def test_delay_sensitive_fraction_large_sample():
    cfg = ScenarioConfig(road=RoadGeometry(length_m=25000.0, lanes=4))
    cfg = replace(cfg, base_stations=tuple(replace(b, range_m=1e5) for b in cfg.base_stations))
    s = generate_case_study(0.4, 11, cfg)
    n = len(s.vehicles)
    assert n == 10000
    k = sum(v.app.delay_sensitive for v in s.vehicles)
    assert abs(k - 0.8 * n) <= 3 * math.sqrt(n * 0.8 * 0.2)


def test_dwell_time_threshold(config):
    s = generate_case_study(0.12, 5, config)
    for v in s.vehicles:
        dwell = (s.road.length_m - v.position_m[0]) / config.demands.nominal_speed_mps
        assert v.response_threshold_s == pytest.approx(dwell)
        if v.app.delay_sensitive:
            assert v.latency_threshold_s == pytest.approx(min(0.1, dwell))
        else:
            assert v.latency_threshold_s is None


def _probe(s, x, lane=0):
    v = Vehicle(10_000, (x, s.road.lane_center(lane)), lane, s.vehicles[0].app, 0.0, 1.0, 0.0, 1.0)
    return replace(s, vehicles=s.vehicles + (v,)), v


def test_coverage_at_enb_includes_both_enbs(road_012):
    s, v = _probe(road_012, 250.0)
    cov = coverage_set(s, v)
    assert {"S1", "S2"} <= cov
    # geometry oracle: exactly the BSs within range
    expect = {b.id for b in s.base_stations
              if math.hypot(b.position_m[0] - 250.0, b.position_m[1] - v.position_m[1]) <= b.range_m}
    assert cov == expect


def test_coverage_boundary_inclusive(road_012):
    ap = road_012.bs("AP3")
    y = road_012.road.lane_center(0)
    dy = y - ap.position_m[1]
    x = ap.position_m[0] + math.sqrt(180.0**2 - dy**2)
    s, v = _probe(road_012, x)
    d = distance_m(ap.position_m, v.position_m)
    assert d == pytest.approx(180.0, abs=1e-9)
    assert ("AP3" in coverage_set(s, v)) == (d <= 180.0)


def test_far_from_every_ap_gives_only_enbs(road_012):
    bss = [replace(b, position_m=(b.position_m[0] + 5000.0 * (b.kind is BsKind.WIFI_AP), b.position_m[1]))
           for b in road_012.base_stations]
    s = replace(road_012, base_stations=tuple(bss))
    for v in s.vehicles:
        cov = coverage_set(s, v)
        assert cov and cov <= {"S1", "S2"}


@settings(max_examples=30, deadline=None)
@given(bs_index=st.integers(0, 7), grow=st.floats(0.0, 500.0))
def test_coverage_monotone_in_range(road_012, bs_index, grow):
    b = road_012.base_stations[bs_index]
    bigger = replace(road_012, base_stations=tuple(
        replace(x, range_m=x.range_m + grow) if x.id == b.id else x for x in road_012.base_stations))
    for v in road_012.vehicles:
        assert coverage_set(road_012, v) <= coverage_set(bigger, v)


def test_json_round_trip(road_012):
    back = Scenario.from_json(road_012.to_json())
    assert back == road_012
    assert back.to_json() == road_012.to_json()


def test_scenario_rejects_uncovered_vehicle(road_012):
    far = tuple(replace(b, range_m=1.0) for b in road_012.base_stations)
    with pytest.raises(ValueError, match="not covered"):
        replace(road_012, base_stations=far)


def test_vehicle_invariants():
    app = QosTable().delay_tolerant
    with pytest.raises(ValueError):
        Vehicle(0, (1.0, 1.0), 0, app, 1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Vehicle(0, (1.0, 1.0), 0, app, 0.0, 0.0, 0.0, 1.0, latency_threshold_s=2.0)
