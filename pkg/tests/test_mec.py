import io
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avnet.config import ScenarioConfig, SolverSettings
from avnet.mec import (
    CLOUD,
    MecAssignment,
    MecWeights,
    TaskDemand,
    assignment_utility,
    build_tasks,
    joint_solve,
    processing_delay,
    solve_assignment,
)
from avnet.oracles import brute_force_assignment, random_mec_instance
from avnet.scenario import MecServer, generate_case_study

from helpers import DS, av, enb, scenario


def srv(id, c=10.0, s=10.0, backhaul=0.01):
    return MecServer(id, c, s, 1e6, (f"B{id}",), backhaul)


def task(k, home, c=1.0, s=0.0, workload=None, T=10.0, L=None, R=0.0):
    workload = c * 0.01 if workload is None else workload
    return TaskDemand(k, home, c, s, workload, T, L, R)


def test_processing_delay_examples():
    t = TaskDemand(0, "M1", 1e8, 0.0, 1e7, 10.0)
    assert processing_delay(t, srv("M1")) == pytest.approx(0.1)
    assert processing_delay(t, srv("M2")) == pytest.approx(0.11)
    assert processing_delay(t, CLOUD, cloud_delay_s=0.05) == pytest.approx(0.15)
    assert processing_delay(t, srv("M2"), backhaul_multiplier=2.0) == pytest.approx(0.12)
    assert processing_delay(TaskDemand(1, "M1", 0.0, 5.0, 0.0, 10.0), srv("M1")) == 0.0
    with pytest.raises(ValueError):
        processing_delay(TaskDemand(2, "M1", 0.0, 5.0, 1.0, 10.0), srv("M1"))


def test_empty_assignment_utility_is_zero():
    a = solve_assignment([], [srv("M1")])
    assert a.utility == 0.0 and a.migrated_volume == 0.0
    assert assignment_utility(a) == 0.0


def test_single_server_all_home():
    tasks = [task(k, "M1", c=2.0, s=1.5) for k in range(4)]
    a = solve_assignment(tasks, [srv("M1")], MecWeights(kappa=3.0))
    assert set(a.compute_server.values()) == {"M1"} and set(a.storage_server.values()) == {"M1"}
    assert a.per_server_compute_util["M1"] == pytest.approx(0.8)
    assert a.per_server_storage_util["M1"] == pytest.approx(0.6)
    assert a.migrated_volume == 0.0
    assert a.utility == pytest.approx(1.4)


def test_three_tasks_two_servers_one_migrates():
    tasks = [task(k, "M1", c=6.0) for k in range(3)]
    servers = [srv("M1"), srv("M2")]
    w = MecWeights(kappa=0.1)
    a = solve_assignment(tasks, servers, w)
    placed = list(a.compute_server.values())
    assert placed.count("M1") == 1 and placed.count("M2") == 1 and placed.count(CLOUD) == 1
    ref, mig, _ = brute_force_assignment(tasks, servers, w)
    assert a.utility == pytest.approx(ref, abs=1e-9)
    assert a.migrated_volume == pytest.approx(mig) == pytest.approx(0.6)


def test_kappa_zero_matches_brute_force():
    tasks = [task(0, "M1", c=4.0, s=3.0), task(1, "M1", c=5.0, s=6.0), task(2, "M2", c=7.0, s=2.0)]
    servers = [srv("M1", 8.0, 8.0), srv("M2", 12.0, 9.0)]
    w = MecWeights(kappa=0.0)
    assert solve_assignment(tasks, servers, w).utility == pytest.approx(brute_force_assignment(tasks, servers, w)[0])


def test_huge_kappa_means_no_migration():
    tasks = [task(k, "M1", c=6.0, s=6.0) for k in range(3)]
    a = solve_assignment(tasks, [srv("M1"), srv("M2")], MecWeights(kappa=1e6))
    assert a.migrated_volume == 0.0
    assert "M2" not in a.compute_server.values() and "M2" not in a.storage_server.values()
    assert list(a.compute_server.values()).count(CLOUD) == 2


def test_delay_constraint_forces_home():
    # remote adds 0.05 s backhaul which breaks a 0.04 s latency threshold
    tasks = [task(0, "M1", c=6.0, workload=0.06, L=0.04, T=1.0), task(1, "M1", c=6.0, workload=0.06, T=1.0)]
    a = solve_assignment(tasks, [srv("M1"), srv("M2", backhaul=0.05)], MecWeights(kappa=0.0))
    assert a.compute_server[0] == "M1"
    assert a.compute_server[1] == "M2"
    assert a.infeasible == ()


def test_unreachable_threshold_is_flagged():
    tasks = [task(0, "M1", c=1.0, workload=0.5, L=0.1, T=1.0), task(1, "M1", c=1.0)]
    a = solve_assignment(tasks, [srv("M1")])
    assert a.infeasible == (0,)
    assert a.compute_server[0] == CLOUD
    assert a.compute_server[1] == "M1"


def _check_invariants(tasks, servers, a):
    caps = {m.id: m for m in servers}
    for m in servers:
        load_c = sum(t.compute for t in tasks if a.compute_server.get(t.av_id) == m.id)
        load_s = sum(t.storage for t in tasks if a.storage_server.get(t.av_id) == m.id)
        assert load_c <= m.compute_capacity and load_s <= m.storage_capacity
        assert a.per_server_compute_util[m.id] == pytest.approx(load_c / m.compute_capacity)
    assert set(a.compute_server) == {t.av_id for t in tasks if t.compute > 0}
    assert set(a.storage_server) == {t.av_id for t in tasks if t.storage > 0}
    for v in list(a.compute_server.values()) + list(a.storage_server.values()):
        assert v == CLOUD or v in caps


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_instances_match_brute_force(seed):
    tasks, servers, w = random_mec_instance(np.random.default_rng(seed))
    a = solve_assignment(tasks, servers, w)
    ref, _, n_late = brute_force_assignment(tasks, servers, w)
    assert a.utility == pytest.approx(ref, abs=1e-9)
    assert len(a.infeasible) == n_late
    assert a.utility == pytest.approx(assignment_utility(a, w), abs=1e-12)
    _check_invariants(tasks, servers, a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_migration_non_increasing_in_kappa(seed):
    tasks, servers, w = random_mec_instance(np.random.default_rng(seed))
    vols = [solve_assignment(tasks, servers, replace(w, kappa=k)).migrated_volume for k in (0, 0.5, 1, 2, 10)]
    assert all(b <= a + 1e-12 for a, b in zip(vols, vols[1:])), vols


def test_local_search_only_improves():
    from avnet.mec import _placement

    rng = np.random.default_rng(5)
    for _ in range(30):
        tasks, servers, w = random_mec_instance(rng)
        p, home, _ = _placement([t for t in tasks if t.compute > 0], servers, w, "compute", 0.05, 1.0)
        if p.demand.size == 0:
            continue
        x0 = p.greedy(home)
        x1 = p.local_search(x0)
        assert p.fits(x0) and p.fits(x1)
        assert p.value(x1) >= p.value(x0) - 1e-12


def test_assignment_json_and_summary():
    tasks = [task(k, "M1", c=6.0, s=4.0) for k in range(3)]
    a = solve_assignment(tasks, [srv("M1"), srv("M2")], MecWeights(kappa=0.1))
    back = MecAssignment.from_dict(json.loads(a.to_json()))
    assert back == a
    buf = io.StringIO()
    a.write_summary_csv(buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "server_id,compute_util,storage_util,n_tasks,n_migrated"
    assert [r.split(",")[0] for r in rows[1:]] == ["M1", "M2", CLOUD]
    assert int(rows[2].split(",")[4]) >= 1


def test_joint_solve_case_study(road_012):
    res = joint_solve(road_012, ScenarioConfig())
    assert res.converged and res.iterations == 1
    sol, a = res
    assert sol.feasible
    assert res.total_utility == pytest.approx(sol.utility + a.utility)
    tasks = build_tasks(road_012, res.association, res.rates_bps)
    _check_invariants(tasks, road_012.mec_servers, a)


def test_joint_solve_flags_only_impossible_task():
    vehicles = [av(0, 100.0), av(1, 300.0, lane=1), av(2, 500.0, lane=2, L=0.001, T=0.001)]
    s = scenario([enb("S1", 300.0)], vehicles)
    res = joint_solve(s, SolverSettings(grid_step=0.5))
    assert res.assignment.infeasible == (2,)
    assert res.assignment.compute_server[0] == "M1" and res.assignment.compute_server[1] == "M1"
    assert res.feasible


def test_joint_solve_raises_rate_floor_when_delay_binds():
    # 20 ms processing under a 26 ms latency budget leaves 6 ms for transmission;
    # at 0.8 MHz the first slicing round is too slow for the farthest AVs
    vehicles = [av(k, 20.0 + 19 * k, lane=k % 4, L=0.026) for k in range(30)]
    mecs = (MecServer("M1", 1.2e10, 4e9, 0.8e6, ("S1",)),)
    s = scenario([enb("S1", 0.0)], vehicles, mecs=mecs)
    res = joint_solve(s, SolverSettings(grid_step=0.5))
    assert res.converged and res.iterations == 2 and res.feasible
    a = res.assignment
    assert a.infeasible == ()
    floor = DS.packet_size_bits * (DS.arrival_rate_pps + 1 / 0.006)
    assert min(res.rates_bps.values()) == pytest.approx(floor, rel=1e-6)
    for t in build_tasks(s, res.association, res.rates_bps):
        assert a.processing_s[t.av_id] + t.transmission_s <= 0.026 + 1e-9


def test_two_mec_servers():
    mecs = (MecServer("M1", 3e8, 4e7, 25e6, ("S1",)), MecServer("M2", 3e8, 4e7, 25e6, ("S2",)))
    vehicles = [av(k, 50.0 + 60 * k, lane=k % 4) for k in range(10)]
    s = scenario([enb("S1", 200.0), enb("S2", 700.0)], vehicles, mecs=mecs)
    res = joint_solve(s, SolverSettings(grid_step=0.5, kappa=0.0))
    assert set(res.slicing) == {"M1", "M2"}
    assert len(res.association) == 10
    sl, a = res
    assert isinstance(sl, dict)
    tasks = build_tasks(s, res.association, res.rates_bps)
    _check_invariants(tasks, mecs, a)
