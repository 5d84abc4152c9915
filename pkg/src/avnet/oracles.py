"""Independent reference computations used to check the solvers.

Everything here takes a different route from the production code: queue
delays come from simulation, fractions from grid search or bisection on the
water level, associations and placements from full enumeration.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .config import SolverSettings
from .mec import CLOUD, MecWeights, TaskDemand
from .qos import required_rate
from .radio import build_reuse_pattern, slice_ids, spectral_efficiency
from .scenario import (
    AppKind,
    ApplicationProfile,
    BaseStation,
    BsKind,
    MecServer,
    RoadGeometry,
    Scenario,
    Vehicle,
    coverage_set,
)
from .slicing import home_mec_members, simplex_grid

# -- queueing -----------------------------------------------------------------


def simulate_mm1_sojourn(arrival_rate_pps: float, service_rate_pps: float, n_packets: int,
                         seed: int = 0) -> np.ndarray:
    """Sojourn times of ``n_packets`` customers of a FIFO M/M/1 queue starting empty.

    Uses the Lindley recursion ``W[n+1] = max(0, W[n] + S[n] - A[n+1])`` written
    as a running minimum of the partial sums of ``S - A``.
    """
    rng = np.random.default_rng(seed)
    inter = rng.exponential(1.0 / arrival_rate_pps, n_packets)
    service = rng.exponential(1.0 / service_rate_pps, n_packets)
    steps = np.concatenate(([0.0], np.cumsum(service[:-1] - inter[1:])))
    wait = steps - np.minimum.accumulate(steps)
    return wait + service


def empirical_violation(app: ApplicationProfile, rate_bps: float, n_packets: int = 1_000_000,
                        seed: int = 0) -> float:
    """Fraction of simulated packets whose delay exceeds the profile's delay bound."""
    sojourn = simulate_mm1_sojourn(app.arrival_rate_pps, rate_bps / app.packet_size_bits, n_packets, seed)
    return float(np.mean(sojourn > app.delay_bound_s))


# -- bandwidth fractions ---------------------------------------------------------


def grid_fractions(min_fractions, step: float = 0.001):
    """Best ``sum ln f`` over the ``step`` grid (at most three AVs); returns ``(value, f)``."""
    fmin = np.asarray(min_fractions, dtype=float)
    n = fmin.size
    K = int(round(1.0 / step))
    if n == 1:
        return (0.0, np.ones(1)) if fmin[0] <= 1 else (-math.inf, None)
    if n > 3:
        raise ValueError("grid search is limited to three AVs")
    ticks = np.arange(K + 1)
    if n == 2:
        f = np.stack([ticks, K - ticks], axis=1) / K
    else:
        a, b = np.meshgrid(ticks, ticks, indexing="ij")
        keep = a + b <= K
        f = np.stack([a[keep], b[keep], K - a[keep] - b[keep]], axis=1) / K
    ok = np.all(f >= fmin - 1e-12, axis=1) & np.all(f > 0, axis=1)
    if not ok.any():
        return -math.inf, None
    with np.errstate(divide="ignore"):
        val = np.where(ok, np.log(np.where(f > 0, f, 1.0)).sum(axis=1), -np.inf)
    i = int(np.argmax(val))
    return float(val[i]), f[i]


def waterfill_log_share(fmin: np.ndarray, member: np.ndarray, iters: int = 80) -> np.ndarray:
    """Best ``sum ln f`` per row over the members of each row (bisection on the water level).

    ``fmin`` and ``member`` are ``(rows, AVs)``. Rows whose member minima sum
    above one get ``-inf``; rows without members get 0.
    """
    fm = np.where(member, fmin, 0.0)
    feasible = fm.sum(axis=1) <= 1.0 + 1e-12
    lo = np.zeros(fm.shape[0])
    hi = np.ones(fm.shape[0])
    for _ in range(iters):
        t = 0.5 * (lo + hi)
        total = np.where(member, np.maximum(fm, t[:, None]), 0.0).sum(axis=1)
        over = total > 1.0
        hi = np.where(over, t, hi)
        lo = np.where(over, lo, t)
    level = lo
    f = np.maximum(fm, level[:, None])
    val = np.where(member, np.log(np.where(member, f, 1.0)), 0.0).sum(axis=1)
    return np.where(feasible, val, -np.inf)


def exhaustive_slicing(s: Scenario, mec: MecServer, grid_step: float,
                       settings: SolverSettings = SolverSettings(), av_ids=None, extra_betas=()):
    """Best log utility over every association of the MEC's AVs and every grid beta
    (plus any ``extra_betas``).

    Returns ``(utility, beta, association)``; utility is ``-inf`` when nothing
    is feasible.
    """
    if av_ids is None:
        av_ids = home_mec_members(s, settings.d_min_m)[mec.id]
    av_ids = list(av_ids)
    bs_ids = sorted(mec.bs_ids)
    n_slices = len(slice_ids(s, mec))
    ones = build_reuse_pattern(s, mec, np.full(n_slices, 1.0 / n_slices))
    slice_order = list(ones.slice_ids)
    # per (bs, av, slice) efficiency from the scalar link-budget functions
    eff = np.zeros((len(bs_ids), len(av_ids), len(slice_order)))
    options = []
    for k, av in enumerate(av_ids):
        cov = coverage_set(s, s.vehicle(av))
        opts = []
        for j, b in enumerate(bs_ids):
            if b not in cov:
                continue
            opts.append(j)
            for si, sid in enumerate(slice_order):
                if sid in ones.bs_slices[b]:
                    eff[j, k, si] = spectral_efficiency(s, ones, b, av, sid, settings.interference_factor,
                                                        settings.d_min_m)
        options.append(opts)
    rmin = np.array([required_rate(s.vehicle(av).app).min_rate_bps for av in av_ids])
    assocs = np.array(list(itertools.product(*options)), dtype=int).reshape(-1, len(av_ids))
    cols = np.arange(len(av_ids))
    best = (-math.inf, None, None)
    betas = list(simplex_grid(len(slice_order), grid_step)) + [np.asarray(b, dtype=float) for b in extra_betas]
    for beta in betas:
        coef = mec.bandwidth_hz * np.einsum("jks,s->jk", eff, beta)
        c = coef[assocs, cols]
        good = np.all(c > 0, axis=1)
        with np.errstate(divide="ignore"):
            total = np.where(good, np.log(np.where(c > 0, c, 1.0)).sum(axis=1), -np.inf)
            fmin = np.where(c > 0, rmin / np.where(c > 0, c, 1.0), np.inf)
        for j in range(len(bs_ids)):
            total = total + waterfill_log_share(np.where(good[:, None], fmin, 0.0), assocs == j)
        i = int(np.argmax(total))
        if total[i] > best[0] + 1e-10:
            best = (float(total[i]), beta.copy(), {av: bs_ids[assocs[i, k]] for k, av in enumerate(av_ids)})
    return best


# -- MEC placement -----------------------------------------------------------------


def _allowed_options(t: TaskDemand, servers, cloud_delay_s, backhaul_multiplier):
    base = t.workload_cycles / t.compute if t.workload_cycles > 0 else 0.0
    limit = t.response_threshold_s
    if t.latency_threshold_s is not None:
        limit = min(limit, t.latency_threshold_s)
    out = []
    for srv in servers:
        d = base + (0.0 if srv.id == t.home_server else backhaul_multiplier * srv.backhaul_delay_s)
        out.append(d + t.transmission_s <= limit)
    out.append(base + cloud_delay_s + t.transmission_s <= limit)
    return out


def _enumerate_resource(demand, caps, homes, allowed, w, kappa, mean_cap):
    K, M = len(demand), len(caps)
    if K == 0:
        return 0.0, 0.0, (), 0
    # the cloud is always open; placing a task there late counts as a violation
    choices = [[o for o in range(M) if allowed[k][o]] + [M] for k in range(K)]
    X = np.array(list(itertools.product(*choices)), dtype=int)
    late = np.array([not allowed[k][M] for k in range(K)])
    violations = ((X == M) & late[None, :]).sum(axis=1)
    d = np.asarray(demand, dtype=float)
    value = np.zeros(X.shape[0])
    migrated = np.zeros(X.shape[0])
    ok = np.ones(X.shape[0], dtype=bool)
    for i in range(M):
        on = X == i
        load = (on * d).sum(axis=1)
        ok &= load <= caps[i]
        value += w * load / caps[i]
        remote = on & (np.asarray(homes) != i)[None, :]
        migrated += (remote * d).sum(axis=1) / mean_cap
    value -= kappa * migrated
    ok &= violations == violations[ok].min()
    value = np.where(ok, value, -np.inf)
    i = int(np.argmax(value))
    return float(value[i]), float(migrated[i]), tuple(X[i]), int(violations[i])


def brute_force_assignment(tasks, servers, weights: MecWeights = MecWeights(), cloud_delay_s: float = 0.05,
                           backhaul_multiplier: float = 1.0):
    """Optimal placement utility by enumerating every placement of both resources.

    Compute and storage decouple (separate capacities, additive utility), so
    each is enumerated on its own. Placements that send the fewest tasks to
    the cloud past their thresholds are compared on utility. Returns
    ``(utility, migrated_volume, n_late)``.
    """
    servers = list(servers)
    ids = [m.id for m in servers]
    tasks = sorted(tasks, key=lambda t: t.av_id)
    M = len(servers)
    comp = [t for t in tasks if t.compute > 0]
    stor = [t for t in tasks if t.storage > 0]
    uc, mc, _, late = _enumerate_resource(
        [t.compute for t in comp], [m.compute_capacity for m in servers],
        [ids.index(t.home_server) if t.home_server in ids else M for t in comp],
        [_allowed_options(t, servers, cloud_delay_s, backhaul_multiplier) for t in comp],
        weights.w_compute, weights.kappa, np.mean([m.compute_capacity for m in servers]))
    us, ms, _, _ = _enumerate_resource(
        [t.storage for t in stor], [m.storage_capacity for m in servers],
        [ids.index(t.home_server) if t.home_server in ids else M for t in stor],
        [[True] * (M + 1) for _ in stor],
        weights.w_storage, weights.kappa, np.mean([m.storage_capacity for m in servers]))
    return uc + us, mc + ms, late


# -- joint ---------------------------------------------------------------------------


def brute_force_joint(s: Scenario, settings: SolverSettings = SolverSettings(), grid_step: float | None = None):
    """Best slicing utility plus placement utility over associations, grid betas and placements.

    Transmission delays follow from each slicing choice; only placements
    meeting every task's thresholds count. Returns the best total.
    """
    from .mec import build_tasks
    from .slicing import evaluate

    step = settings.grid_step if grid_step is None else grid_step
    weights = MecWeights(settings.w_compute, settings.w_storage, settings.kappa)
    members = home_mec_members(s, settings.d_min_m)
    per_mec = []
    for m in s.mec_servers:
        avs = members[m.id]
        opts = [sorted(b for b in coverage_set(s, s.vehicle(k)) if b in m.bs_ids) for k in avs]
        cands = []
        for beta in simplex_grid(len(slice_ids(s, m)), step):
            for combo in itertools.product(*opts):
                sol = evaluate(s, m, beta, dict(zip(avs, combo)), settings)
                if sol.feasible:
                    cands.append(sol)
        per_mec.append(cands)
    best = -math.inf
    for combo in itertools.product(*per_mec):
        assoc, rates = {}, {}
        for sol in combo:
            assoc.update(sol.association)
            rates.update(sol.rates_bps)
        tasks = build_tasks(s, assoc, rates)
        u, _, n_late = brute_force_assignment(tasks, s.mec_servers, weights, settings.cloud_delay_s,
                                              settings.backhaul_multiplier)
        if n_late == 0:
            best = max(best, sum(sol.utility for sol in combo) + u)
    return best


# -- random tiny instances -------------------------------------------------------------------


def _app(rng, delay_sensitive: bool, tight: bool) -> ApplicationProfile:
    if delay_sensitive:
        return ApplicationProfile(AppKind.DELAY_SENSITIVE, 4.0, 1048.0, delay_bound_s=0.1, violation_prob=1e-3)
    thr = float(rng.uniform(2e6, 2e7)) if tight else None
    return ApplicationProfile(AppKind.DELAY_TOLERANT, 20.0, 9000.0, rate_threshold_bps=thr)


def random_tiny_scenario(rng: np.random.Generator, max_bss: int = 3, max_avs: int = 6) -> Scenario:
    """A random road of at most ``max_bss`` BSs (first one an eNB) and ``max_avs`` AVs under one MEC server."""
    road = RoadGeometry(length_m=400.0, lanes=2, lane_width_m=3.5)
    n_bs = int(rng.integers(1, max_bss + 1))
    bss = []
    for i in range(n_bs):
        kind = BsKind.ENB if i == 0 or rng.random() < 0.3 else BsKind.WIFI_AP
        x = float(rng.uniform(0, road.length_m))
        if kind is BsKind.ENB:
            bss.append(BaseStation(f"E{i}", kind, (x, -10.0), 40.0, 600.0, -30.0, -35.0, 1.0,
                                   reuse_radius_m=float(rng.uniform(20, 200))))
        else:
            bss.append(BaseStation(f"A{i}", kind, (x, -10.0), 28.45, 180.0, -40.0, -35.0, 0.8))
    mec = MecServer("M1", 1e10, 1e9, 25e6, tuple(b.id for b in bss), 0.01)
    n_av = int(rng.integers(2, max_avs + 1))
    tight = bool(rng.random() < 0.5)
    vehicles = []
    for k in range(n_av):
        ds = bool(rng.random() < 0.8)
        vehicles.append(Vehicle(k, (float(rng.uniform(0, road.length_m)), road.lane_center(int(rng.integers(2)))),
                                0, _app(rng, ds, tight), 1e8 if ds else 0.0, 1e7, 2e6 if ds else 0.0,
                                10.0, 0.1 if ds else None))
    return Scenario(road, vehicles, bss, (mec,), -104.0, int(rng.integers(2**31)))


def random_mec_instance(rng: np.random.Generator, max_servers: int = 3, max_tasks: int = 8):
    """Random servers, tasks and weights for the placement oracle."""
    M = int(rng.integers(1, max_servers + 1))
    servers = [MecServer(f"M{i}", float(rng.uniform(4, 15)), float(rng.uniform(4, 15)), 1e6,
                         (f"B{i}",), float(rng.choice([0.0, 0.01, 0.05]))) for i in range(M)]
    K = int(rng.integers(1, max_tasks + 1))
    tasks = []
    for k in range(K):
        compute = float(rng.uniform(0.5, 6)) if rng.random() < 0.85 else 0.0
        tasks.append(TaskDemand(
            av_id=k,
            home_server=f"M{int(rng.integers(M))}",
            compute=compute,
            storage=float(rng.uniform(0.5, 6)) if rng.random() < 0.9 else 0.0,
            workload_cycles=compute * float(rng.uniform(0.01, 0.05)),
            response_threshold_s=float(rng.uniform(0.05, 0.2)),
            latency_threshold_s=float(rng.uniform(0.04, 0.1)) if rng.random() < 0.7 else None,
            transmission_s=float(rng.uniform(0.0, 0.03)),
        ))
    weights = MecWeights(float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2)), float(rng.uniform(0, 2)))
    return tasks, servers, weights


def random_joint_instance(rng: np.random.Generator) -> Scenario:
    """Two BSs each under their own MEC server, four AVs."""
    road = RoadGeometry(length_m=400.0, lanes=2, lane_width_m=3.5)
    bss = [BaseStation("E1", BsKind.ENB, (100.0, -10.0), 40.0, 600.0, -30.0, -35.0, 1.0),
           BaseStation("E2", BsKind.ENB, (300.0, -10.0), 40.0, 600.0, -30.0, -35.0, 1.0)]
    mecs = (MecServer("M1", float(rng.uniform(1.5e8, 3.5e8)), 3e7, 25e6, ("E1",), 0.01),
            MecServer("M2", float(rng.uniform(1.5e8, 3.5e8)), 3e7, 25e6, ("E2",), 0.01))
    vehicles = []
    for k in range(4):
        ds = bool(rng.random() < 0.75)
        vehicles.append(Vehicle(k, (float(rng.uniform(0, road.length_m)), road.lane_center(k % 2)), k % 2,
                                _app(rng, ds, False), 1e8 if ds else 0.0, float(rng.uniform(0.5e7, 2e7)),
                                2e6 if ds else 0.0, 10.0, 0.1 if ds else None))
    return Scenario(road, vehicles, bss, mecs, -104.0, int(rng.integers(2**31)))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _slicing_checks(rng, n, step):
    from .slicing import solve_num

    settings = SolverSettings(grid_step=step)
    worst = 0.0
    bad = []
    for i in range(n):
        s = random_tiny_scenario(rng)
        m = s.mec_servers[0]
        # the solver also tries the baseline's fixed ratios, so the oracle does too
        n_slices = len(slice_ids(s, m))
        ref, _, _ = exhaustive_slicing(s, m, step, settings, extra_betas=[np.full(n_slices, 1.0 / n_slices)])
        sol = solve_num(s, m, settings=settings)
        if not math.isfinite(ref):
            if sol.feasible:
                bad.append(i)
            continue
        gap = (ref - sol.utility) / abs(ref) if sol.feasible else math.inf
        worst = max(worst, gap)
        if gap > 0.01 or sol.utility > ref + 1e-6 * abs(ref):
            bad.append(i)
    return Check("slicing vs exhaustive", not bad, f"{n} instances, worst relative gap {worst:.2e}, failing {bad}")


def _mec_checks(rng, n):
    from .mec import solve_assignment

    worst = 0.0
    bad = []
    for i in range(n):
        tasks, servers, w = random_mec_instance(rng)
        ref, _, n_late = brute_force_assignment(tasks, servers, w)
        a = solve_assignment(tasks, servers, w)
        err = abs(a.utility - ref)
        worst = max(worst, err)
        over = any(a.per_server_compute_util[m.id] > 1 + 1e-12 or a.per_server_storage_util[m.id] > 1 + 1e-12
                   for m in servers)
        placed = (set(a.compute_server) == {t.av_id for t in tasks if t.compute > 0}
                  and set(a.storage_server) == {t.av_id for t in tasks if t.storage > 0})
        if err > 1e-9 or over or not placed or len(a.infeasible) != n_late:
            bad.append(i)
    return Check("placement vs brute force", not bad, f"{n} instances, worst abs error {worst:.2e}, failing {bad}")


def _fraction_checks(rng, n):
    from .slicing import optimal_fractions

    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(1, 4))
        fmin = rng.dirichlet(np.ones(k + 1))[:k] * float(rng.uniform(0.2, 1.0))
        f = optimal_fractions(fmin)
        val = float(np.log(f).sum())
        wf = float(waterfill_log_share(fmin[None, :], np.ones((1, k), dtype=bool))[0])
        gv, _ = grid_fractions(fmin)
        worst = max(worst, abs(val - wf))
        if gv > val + 1e-9 or abs(val - wf) > 1e-9:
            return Check("fractions vs water-filling", False, f"minima {fmin}: {val} vs {wf} / grid {gv}")
    return Check("fractions vs water-filling", True, f"{n} instances, worst abs error {worst:.2e}")


def _queue_check(n_packets):
    from .qos import required_rate as req

    app = ApplicationProfile(AppKind.DELAY_SENSITIVE, 4.0, 1048.0, delay_bound_s=0.1, violation_prob=1e-3)
    v = empirical_violation(app, req(app).min_rate_bps, n_packets, seed=1)
    return Check("queue violation at the effective rate", v <= 1.5e-3, f"{n_packets} packets, violation {v:.2e}")


def _joint_checks(rng, n):
    from .mec import joint_solve

    settings = SolverSettings(grid_step=0.25)
    gaps = []
    bad = []
    for i in range(n):
        s = random_joint_instance(rng)
        ref = brute_force_joint(s, settings)
        res = joint_solve(s, settings)
        if not res.feasible or res.assignment.infeasible:
            continue
        gaps.append(abs(ref - res.total_utility))
        if gaps[-1] > 1e-6:
            bad.append(i)
    detail = f"{len(gaps)} comparable instances, largest gap {max(gaps, default=0.0):.3g}, failing {bad}"
    return Check("joint solve vs enumeration", not bad, detail)


def run_verification(size: str = "tiny", seed: int = 0) -> list[Check]:
    """Run every oracle comparison. ``size`` is ``"tiny"`` (fast) or ``"full"``."""
    if size not in ("tiny", "full"):
        raise ValueError(f"unknown size {size!r}")
    n = 50 if size == "full" else 10
    rng = np.random.default_rng(seed)
    return [
        _fraction_checks(rng, 5 * n),
        _slicing_checks(rng, n, 0.05),
        _mec_checks(rng, n),
        _queue_check(1_000_000 if size == "full" else 200_000),
        _joint_checks(rng, max(2, n // 10)),
    ]
