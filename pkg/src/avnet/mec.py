"""Compute/storage placement over MEC servers and the joint slicing/placement loop.

Each AV task's compute share and storage share are placed on exactly one
MEC server or on the cloud. With ``C_bar``/``S_bar`` the mean server
capacities, a placement scores

    U = sum_i [w_c * util_c(i) + w_s * util_s(i)] - kappa * migrated_volume
    migrated_volume = sum over non-home edge placements of C^k / C_bar (compute)
                      plus S^k / S_bar (storage)

Cloud placements earn no utilization and are not counted as migrations.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .config import ScenarioConfig, SolverSettings
from .qos import DelayBudget, check_delay_constraints, rate_for_delay, transmission_delay
from .scenario import MecServer, Scenario
from .slicing import SlicingProblem, SlicingSolution, home_mec_members, solve_num

CLOUD = "CLOUD"
VIOLATION_PENALTY = 1e6
COMPUTE, STORAGE = "compute", "storage"


@dataclass(frozen=True)
class MecWeights:
    w_compute: float = 1.0
    w_storage: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        if min(self.w_compute, self.w_storage, self.kappa) < 0:
            raise ValueError("weights must be nonnegative")


@dataclass(frozen=True)
class TaskDemand:
    av_id: int
    home_server: str
    compute: float
    storage: float
    workload_cycles: float
    response_threshold_s: float
    latency_threshold_s: float | None = None
    transmission_s: float = 0.0

    def __post_init__(self):
        if self.compute < 0 or self.storage < 0 or self.workload_cycles < 0:
            raise ValueError(f"task {self.av_id}: demands must be nonnegative")


@dataclass
class MecAssignment:
    compute_server: dict[int, str]
    storage_server: dict[int, str]
    per_server_compute_util: dict[str, float]
    per_server_storage_util: dict[str, float]
    migrated_volume: float
    utility: float
    infeasible: tuple[int, ...] = ()
    processing_s: dict[int, float] = field(default_factory=dict)
    home_server: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "compute_server": [{"av_id": k, "server": v} for k, v in sorted(self.compute_server.items())],
            "storage_server": [{"av_id": k, "server": v} for k, v in sorted(self.storage_server.items())],
            "per_server_compute_util": dict(sorted(self.per_server_compute_util.items())),
            "per_server_storage_util": dict(sorted(self.per_server_storage_util.items())),
            "migrated_volume": self.migrated_volume,
            "utility": self.utility,
            "infeasible": list(self.infeasible),
            "processing_s": [{"av_id": k, "delay_s": v} for k, v in sorted(self.processing_s.items())],
            "home_server": [{"av_id": k, "server": v} for k, v in sorted(self.home_server.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MecAssignment":
        return cls(
            compute_server={x["av_id"]: x["server"] for x in d["compute_server"]},
            storage_server={x["av_id"]: x["server"] for x in d["storage_server"]},
            per_server_compute_util=dict(d["per_server_compute_util"]),
            per_server_storage_util=dict(d["per_server_storage_util"]),
            migrated_volume=d["migrated_volume"],
            utility=d["utility"],
            infeasible=tuple(d.get("infeasible", ())),
            processing_s={x["av_id"]: x["delay_s"] for x in d.get("processing_s", [])},
            home_server={x["av_id"]: x["server"] for x in d.get("home_server", [])},
        )

    def write_summary_csv(self, fh):
        """One row per server (cloud last): ``server_id,compute_util,storage_util,n_tasks,n_migrated``."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["server_id", "compute_util", "storage_util", "n_tasks", "n_migrated"])
        servers = sorted(self.per_server_compute_util) + [CLOUD]
        for sid in servers:
            avs = {k for k, v in self.compute_server.items() if v == sid}
            avs |= {k for k, v in self.storage_server.items() if v == sid}
            migrated = 0
            if sid != CLOUD:
                migrated = sum(1 for k in avs if self.home_server.get(k, sid) != sid)
            w.writerow([sid, repr(self.per_server_compute_util.get(sid, 0.0)),
                        repr(self.per_server_storage_util.get(sid, 0.0)), len(avs), migrated])


def processing_delay(t: TaskDemand, server: MecServer | str, cloud_delay_s: float = 0.05,
                     backhaul_multiplier: float = 1.0) -> float:
    """Seconds from task arrival until ``server`` (a MecServer or ``CLOUD``) finishes it."""
    if t.workload_cycles == 0:
        base = 0.0
    elif t.compute <= 0:
        raise ValueError(f"task {t.av_id} has workload but no compute rate")
    else:
        base = t.workload_cycles / t.compute
    if isinstance(server, str):
        if server != CLOUD:
            raise ValueError(f"unknown server {server!r}")
        return base + cloud_delay_s
    if server.id != t.home_server:
        base += backhaul_multiplier * server.backhaul_delay_s
    return base


def delay_ok(t: TaskDemand, d_s: float) -> bool:
    return check_delay_constraints(
        DelayBudget(t.av_id, d_s, t.transmission_s, t.response_threshold_s, t.latency_threshold_s)
    )


def assignment_utility(a: MecAssignment, weights: MecWeights = MecWeights()) -> float:
    total = 0.0
    for sid, u in a.per_server_compute_util.items():
        total += weights.w_compute * u
    for sid, u in a.per_server_storage_util.items():
        total += weights.w_storage * u
    return total - weights.kappa * a.migrated_volume


class _Placement:
    """One resource's placement problem: values ``v[k, o]`` over options (servers..., cloud)."""

    def __init__(self, demand, caps, values, allowed):
        self.demand = demand          # (K,)
        self.caps = caps              # (M,)
        self.values = values          # (K, M+1), last column is the cloud
        self.allowed = allowed        # (K, M+1) bool

    @property
    def cloud(self) -> int:
        return self.caps.size

    def loads(self, x):
        return np.bincount(x, weights=self.demand, minlength=self.cloud + 1)[: self.cloud]

    def value(self, x) -> float:
        return float(self.values[np.arange(x.size), x].sum())

    def fits(self, x) -> bool:
        return bool(np.all(self.loads(x) <= self.caps))

    def greedy(self, home) -> np.ndarray:
        K, M = self.demand.size, self.cloud
        x = np.full(K, M)
        load = np.zeros(M)
        for k in range(K):
            h = home[k]
            if h < M and self.allowed[k, h] and load[h] + self.demand[k] <= self.caps[h]:
                x[k] = h
            else:
                best, best_v = M, -math.inf
                for i in range(M):
                    if i == h or not self.allowed[k, i] or load[i] + self.demand[k] > self.caps[i]:
                        continue
                    if self.values[k, i] > best_v:
                        best, best_v = i, self.values[k, i]
                x[k] = best
            if x[k] < M:
                load[x[k]] += self.demand[k]
        return x

    def local_search(self, x) -> np.ndarray:
        """First-improvement 1-moves and 2-swaps in ascending (task, option) order."""
        K, M = self.demand.size, self.cloud
        x = x.copy()
        load = self.loads(x)
        d, v = self.demand, self.values
        improved = True
        while improved:
            improved = False
            for k in range(K):
                for o in range(M + 1):
                    if o == x[k] or not self.allowed[k, o]:
                        continue
                    if o < M and load[o] + d[k] > self.caps[o]:
                        continue
                    if v[k, o] > v[k, x[k]] + 1e-12:
                        if x[k] < M:
                            load[x[k]] -= d[k]
                        if o < M:
                            load[o] += d[k]
                        x[k] = o
                        improved = True
            for k in range(K):
                for l in range(k + 1, K):
                    a, b = x[k], x[l]
                    if a == b or not (self.allowed[k, b] and self.allowed[l, a]):
                        continue
                    gain = v[k, b] + v[l, a] - v[k, a] - v[l, b]
                    if gain <= 1e-12:
                        continue
                    la = load[a] - d[k] + d[l] if a < M else 0.0
                    lb = load[b] - d[l] + d[k] if b < M else 0.0
                    if (a < M and la > self.caps[a]) or (b < M and lb > self.caps[b]):
                        continue
                    if a < M:
                        load[a] = la
                    if b < M:
                        load[b] = lb
                    x[k], x[l] = b, a
                    improved = True
        return x

    def exact(self, time_limit: float = 30.0) -> np.ndarray | None:
        """Optimal placement by MILP, or ``None`` if the solver does not certify one."""
        K, M = self.demand.size, self.cloud
        pairs = [(k, o) for k in range(K) for o in range(M + 1) if self.allowed[k, o]]
        if not pairs:
            return None
        n = len(pairs)
        c = -np.array([self.values[k, o] for k, o in pairs])
        rows, cols, vals = [], [], []
        for p, (k, o) in enumerate(pairs):
            rows.append(k)
            cols.append(p)
            vals.append(1.0)
            if o < M:
                rows.append(K + o)
                cols.append(p)
                vals.append(self.demand[k])
        A = np.zeros((K + M, n))
        A[rows, cols] = vals
        lb = np.concatenate([np.ones(K), np.full(M, -np.inf)])
        for shrink in (0.0, 1e-9, 1e-7):
            ub = np.concatenate([np.ones(K), self.caps * (1.0 - shrink)])
            res = milp(c, integrality=np.ones(n), bounds=Bounds(0, 1),
                       constraints=LinearConstraint(A, lb, ub),
                       options={"mip_rel_gap": 0.0, "time_limit": time_limit})
            if res.status != 0 or res.x is None:
                return None
            x = np.full(K, M)
            for p, (k, o) in enumerate(pairs):
                if res.x[p] > 0.5:
                    x[k] = o
            if self.fits(x):
                return x
        return None


def _placement(tasks, servers, weights, resource, cloud_delay_s, backhaul_multiplier):
    M = len(servers)
    ids = [s.id for s in servers]
    if resource == COMPUTE:
        demand = np.array([t.compute for t in tasks], dtype=float)
        caps = np.array([s.compute_capacity for s in servers], dtype=float)
        w = weights.w_compute
    else:
        demand = np.array([t.storage for t in tasks], dtype=float)
        caps = np.array([s.storage_capacity for s in servers], dtype=float)
        w = weights.w_storage
    mean_cap = caps.mean()
    home = np.array([ids.index(t.home_server) if t.home_server in ids else M for t in tasks], dtype=int)
    values = np.zeros((len(tasks), M + 1))
    values[:, :M] = w * demand[:, None] / caps[None, :]
    remote = np.arange(M)[None, :] != home[:, None]
    values[:, :M] -= weights.kappa * remote * (demand[:, None] / mean_cap)
    allowed = np.ones((len(tasks), M + 1), dtype=bool)
    if resource == COMPUTE:
        for k, t in enumerate(tasks):
            for i, srv in enumerate(list(servers) + [CLOUD]):
                allowed[k, i] = delay_ok(t, processing_delay(t, srv, cloud_delay_s, backhaul_multiplier))
    # the cloud is always available; a late cloud placement costs more than any utility gain
    late = ~allowed[:, M]
    values[late, M] = -VIOLATION_PENALTY
    allowed[:, M] = True
    return _Placement(demand, caps, values, allowed), home, late


def _assemble(tasks, servers, weights, xc, xs, pc, ps, infeasible, cloud_delay_s, backhaul_multiplier):
    M = len(servers)
    ids = [s.id for s in servers]
    name = lambda i: CLOUD if i == M else ids[i]
    comp_tasks = [k for k, t in enumerate(tasks) if t.compute > 0]
    stor_tasks = [k for k, t in enumerate(tasks) if t.storage > 0]
    compute_server = {tasks[k].av_id: name(xc[i]) for i, k in enumerate(comp_tasks)}
    storage_server = {tasks[k].av_id: name(xs[i]) for i, k in enumerate(stor_tasks)}
    cl, sl = pc.loads(xc), ps.loads(xs)
    util_c = {ids[i]: float(cl[i] / servers[i].compute_capacity) for i in range(M)}
    util_s = {ids[i]: float(sl[i] / servers[i].storage_capacity) for i in range(M)}
    mean_c = np.mean([s.compute_capacity for s in servers])
    mean_s = np.mean([s.storage_capacity for s in servers])
    migrated = 0.0
    by_id = {s.id: s for s in servers}
    proc = {}
    for t in tasks:
        cs = compute_server.get(t.av_id)
        if cs is not None:
            if cs != CLOUD and cs != t.home_server:
                migrated += t.compute / mean_c
            proc[t.av_id] = processing_delay(t, by_id.get(cs, CLOUD), cloud_delay_s, backhaul_multiplier)
        ss = storage_server.get(t.av_id)
        if ss is not None and ss != CLOUD and ss != t.home_server:
            migrated += t.storage / mean_s
    a = MecAssignment(compute_server, storage_server, util_c, util_s, float(migrated), 0.0,
                      tuple(sorted(infeasible)), proc, {t.av_id: t.home_server for t in tasks})
    a.utility = assignment_utility(a, weights)
    return a


def solve_assignment(tasks, servers, weights: MecWeights = MecWeights(), cloud_delay_s: float = 0.05,
                     backhaul_multiplier: float = 1.0, exact: bool = True) -> MecAssignment:
    """Place every task's compute and storage share on one server each (or the cloud).

    Greedy seeding (home server, else the best remaining server, else the
    cloud) is refined by 1-move/2-swap local search and then by an exact MILP
    whose answer is kept only if it scores higher. Compute placements must
    meet the task's delay thresholds. The cloud stays open as a last resort:
    the number of tasks sent there too late is minimised first, and those
    tasks are listed in ``infeasible``.
    """
    servers = tuple(servers)
    if not servers:
        raise ValueError("at least one MEC server is required")
    tasks = sorted(tasks, key=lambda t: t.av_id)
    comp = [t for t in tasks if t.compute > 0]
    stor = [t for t in tasks if t.storage > 0]
    pc, home_c, late = _placement(comp, servers, weights, COMPUTE, cloud_delay_s, backhaul_multiplier)
    ps, home_s, _ = _placement(stor, servers, weights, STORAGE, cloud_delay_s, backhaul_multiplier)

    xs_out = []
    for p, home in ((pc, home_c), (ps, home_s)):
        if p.demand.size == 0:
            xs_out.append(np.empty(0, dtype=int))
            continue
        x = p.local_search(p.greedy(home))
        if exact:
            xe = p.exact()
            if xe is not None and p.value(xe) > p.value(x) + 1e-12:
                x = xe
        xs_out.append(x)
    infeasible = [t.av_id for k, t in enumerate(comp) if late[k] and xs_out[0][k] == pc.cloud]
    return _assemble(tasks, servers, weights, xs_out[0], xs_out[1], pc, ps, infeasible,
                     cloud_delay_s, backhaul_multiplier)


def build_tasks(s: Scenario, association: dict[int, str], rates_bps: dict[int, float]) -> list[TaskDemand]:
    """Tasks of every associated AV; the home server is the MEC server of its BS."""
    tasks = []
    for k in sorted(association):
        v = s.vehicle(k)
        if v.compute_demand == 0 and v.storage_demand == 0:
            continue
        tasks.append(TaskDemand(
            av_id=k,
            home_server=s.mec_of_bs(association[k]).id,
            compute=v.compute_demand,
            storage=v.storage_demand,
            workload_cycles=v.workload_cycles,
            response_threshold_s=v.response_threshold_s,
            latency_threshold_s=v.latency_threshold_s,
            transmission_s=transmission_delay(rates_bps.get(k, 0.0), v.app),
        ))
    return tasks


@dataclass
class JointResult:
    slicing: dict[str, SlicingSolution]
    assignment: MecAssignment
    converged: bool
    iterations: int

    @property
    def association(self) -> dict[int, str]:
        out = {}
        for sol in self.slicing.values():
            out.update(sol.association)
        return out

    @property
    def rates_bps(self) -> dict[int, float]:
        out = {}
        for sol in self.slicing.values():
            out.update(sol.rates_bps)
        return out

    @property
    def slicing_utility(self) -> float:
        return sum(sol.utility for sol in self.slicing.values())

    @property
    def feasible(self) -> bool:
        return all(sol.feasible for sol in self.slicing.values())

    @property
    def total_utility(self) -> float:
        return self.slicing_utility + self.assignment.utility

    def __iter__(self):
        sl = next(iter(self.slicing.values())) if len(self.slicing) == 1 else self.slicing
        return iter((sl, self.assignment))


def _weights(settings: SolverSettings) -> MecWeights:
    return MecWeights(settings.w_compute, settings.w_storage, settings.kappa)


def _delay_rate_floors(s: Scenario, tasks, a: MecAssignment, servers, settings) -> dict[int, float]:
    """Rates that keep each placed task within its thresholds, and for infeasible tasks the rate
    that would make their fastest option feasible."""
    by_id = {m.id: m for m in servers}
    floors = {}
    for t in tasks:
        if t.compute <= 0:
            continue
        thr = t.response_threshold_s
        if t.latency_threshold_s is not None:
            thr = min(thr, t.latency_threshold_s)
        if t.av_id in a.infeasible:
            d = min(processing_delay(t, srv, settings.cloud_delay_s, settings.backhaul_multiplier)
                    for srv in list(servers) + [CLOUD])
        else:
            srv = by_id.get(a.compute_server[t.av_id], CLOUD)
            d = processing_delay(t, srv, settings.cloud_delay_s, settings.backhaul_multiplier)
        r = rate_for_delay(s.vehicle(t.av_id).app, thr - d)
        if math.isfinite(r):
            floors[t.av_id] = r
    return floors


def joint_solve(s: Scenario, config: ScenarioConfig | SolverSettings | None = None) -> JointResult:
    """Alternate slicing and placement until they agree.

    Each round solves slicing under the current rate floors, places tasks with
    the resulting transmission delays, and derives new rate floors from the
    placements. A round whose rates already meet the new floors is a fixed
    point. After ``max_iters`` rounds the best-utility round is returned with
    ``converged=False``.
    """
    if config is None:
        settings = SolverSettings()
    elif isinstance(config, ScenarioConfig):
        settings = config.solver
    else:
        settings = config
    weights = _weights(settings)
    members = home_mec_members(s, settings.d_min_m)
    floors: dict[int, float] = {}
    history = []
    prev_key = None
    for it in range(1, settings.max_iters + 1):
        slicing = {
            m.id: solve_num(s, m, settings=settings,
                            problem=SlicingProblem(s, m, settings, floors, members[m.id]))
            for m in s.mec_servers
        }
        assoc, rates = {}, {}
        for sol in slicing.values():
            assoc.update(sol.association)
            rates.update(sol.rates_bps)
        tasks = build_tasks(s, assoc, rates)
        a = solve_assignment(tasks, s.mec_servers, weights, settings.cloud_delay_s,
                             settings.backhaul_multiplier)
        result = JointResult(slicing, a, False, it)
        history.append(result)
        new = _delay_rate_floors(s, tasks, a, s.mec_servers, settings)
        satisfied = all(rates.get(k, 0.0) >= r * (1 - 1e-12) for k, r in new.items())
        key = (tuple(sorted(assoc.items())), tuple(sorted(a.compute_server.items())),
               tuple(sorted(a.storage_server.items())))
        if satisfied or key == prev_key:
            result.converged = True
            return result
        prev_key = key
        for k, r in new.items():
            floors[k] = max(floors.get(k, 0.0), r)
    best = max(history, key=lambda r: (r.feasible, r.total_utility))
    best.converged = False
    return best
