"""Bandwidth slicing: slice ratios, vehicle-BS association and per-AV bandwidth fractions.

For a MEC server with total bandwidth ``B``, slice ratios ``beta`` and an
association, AV ``k`` on BS ``j`` receives

    rate_k = B * f_jk * sum_{s in slices(j)} beta_s * eff_s(j, k)

and the network utility is ``sum_k ln(rate_k)``. For a fixed ``beta`` and
association the fractions have a closed form (``optimal_fractions``); the
association is searched greedily plus 1-move local search, and ``beta`` by
grid enumeration over the simplex.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _search
from .config import SolverSettings
from .qos import required_rate
from .radio import (
    D_MIN_M,
    ReusePattern,
    build_reuse_pattern,
    dbm_to_mw,
    link_table,
    received_power_dbm,
    slice_ids,
)
from .scenario import BsKind, MecServer, Scenario, coverage_set, distance_m

_TOL = _search.TOL


def optimal_fractions(min_fractions) -> np.ndarray | None:
    """Maximise ``sum ln(f_k)`` subject to ``sum f_k = 1`` and ``f_k >= min_fractions[k]``.

    The per-AV efficiency factors drop out of the log utility, so only the
    minima matter: AVs whose equal share falls below their minimum are pinned
    at it (largest first) and the rest split the remainder evenly. Returns
    ``None`` when the minima sum above one.
    """
    fmin = np.asarray(min_fractions, dtype=float)
    n = fmin.size
    if n == 0:
        return np.empty(0)
    if fmin.sum() > 1.0 + 1e-12:
        return None
    f = np.empty(n)
    pinned = np.zeros(n, dtype=bool)
    remaining, free = 1.0, n
    for k in np.argsort(-fmin, kind="stable"):
        if fmin[k] * free > remaining:
            f[k] = fmin[k]
            pinned[k] = True
            remaining -= fmin[k]
            free -= 1
        else:
            break
    f[~pinned] = remaining / free
    return f


@dataclass
class SlicingSolution:
    mec_id: str
    pattern: ReusePattern
    association: dict[int, str]
    fractions: dict[tuple[str, int], float]
    rates_bps: dict[int, float]
    utility: float
    feasible: bool
    diagnostics: tuple[str, ...] = ()
    trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def beta(self) -> np.ndarray:
        return self.pattern.beta

    def counts_by_kind(self, s: Scenario) -> dict[BsKind, int]:
        out = {BsKind.ENB: 0, BsKind.WIFI_AP: 0}
        for b in self.association.values():
            out[s.bs(b).kind] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "mec_id": self.mec_id,
            "slices": [{"slice_id": sid, "ratio": r} for sid, r in self.pattern.slices],
            "bs_slices": {b: sorted(ss) for b, ss in sorted(self.pattern.bs_slices.items())},
            "association": [{"av_id": k, "bs_id": b} for k, b in sorted(self.association.items())],
            "fractions": [{"bs_id": b, "av_id": k, "fraction": f}
                          for (b, k), f in sorted(self.fractions.items(), key=lambda t: (t[0][1], t[0][0]))],
            "rates_bps": [{"av_id": k, "rate_bps": r} for k, r in sorted(self.rates_bps.items())],
            "utility": self.utility,
            "feasible": self.feasible,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SlicingSolution":
        pattern = ReusePattern(
            tuple((x["slice_id"], x["ratio"]) for x in d["slices"]),
            {b: frozenset(ss) for b, ss in d["bs_slices"].items()},
        )
        return cls(
            mec_id=d["mec_id"],
            pattern=pattern,
            association={x["av_id"]: x["bs_id"] for x in d["association"]},
            fractions={(x["bs_id"], x["av_id"]): x["fraction"] for x in d["fractions"]},
            rates_bps={x["av_id"]: x["rate_bps"] for x in d["rates_bps"]},
            utility=d["utility"],
            feasible=d["feasible"],
            diagnostics=tuple(d["diagnostics"]),
        )

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["av_id", "bs_id", "fraction", "rate_bps"])
        for k in sorted(self.association):
            b = self.association[k]
            w.writerow([k, b, repr(self.fractions.get((b, k), 0.0)), repr(self.rates_bps.get(k, 0.0))])


def home_mec_members(s: Scenario, d_min: float = D_MIN_M) -> dict[str, tuple[int, ...]]:
    """Partition AVs over MEC servers by their strongest covering BS (ties: lowest id)."""
    out: dict[str, list[int]] = {m.id: [] for m in s.mec_servers}
    for v in s.vehicles:
        best = None
        for bid in sorted(coverage_set(s, v)):
            b = s.bs(bid)
            p = received_power_dbm(b, distance_m(b.position_m, v.position_m), d_min)
            if best is None or p > best[0]:
                best = (p, bid)
        out[s.mec_of_bs(best[1]).id].append(v.id)
    return {m: tuple(ids) for m, ids in out.items()}


def simplex_grid(n_slices: int, step: float) -> np.ndarray:
    """All ratio vectors with entries in multiples of ``1/K`` summing to one, ``K = ceil(1/step)``,
    in ascending lexicographic order."""
    K = int(math.ceil(1.0 / step - 1e-9))
    if n_slices == 1:
        return np.ones((1, 1))
    rows = [c for c in itertools.product(range(K + 1), repeat=n_slices - 1) if sum(c) <= K]
    grid = np.array([list(c) + [K - sum(c)] for c in rows], dtype=float) / K
    return grid


class SlicingProblem:
    """Precomputed link data and rate floors for the AVs homed at one MEC server."""

    def __init__(self, s: Scenario, mec: MecServer, settings: SolverSettings = SolverSettings(),
                 extra_min_rates: dict[int, float] | None = None, av_ids=None):
        self.s = s
        self.mec = mec
        self.settings = settings
        if av_ids is None:
            av_ids = home_mec_members(s, settings.d_min_m)[mec.id]
        self.table = link_table(s, mec, av_ids, settings.interference_factor, settings.d_min_m)
        self.av_ids = self.table.av_ids
        self.bs_ids = self.table.bs_ids
        self.slice_ids = slice_ids(s, mec)
        self.bandwidth = mec.bandwidth_hz
        extra = extra_min_rates or {}
        self.min_rates = np.array(
            [max(required_rate(s.vehicle(k).app).min_rate_bps, extra.get(k, 0.0)) for k in self.av_ids]
        )

    @property
    def n_slices(self) -> int:
        return len(self.slice_ids)

    def rate_coefficients(self, beta) -> np.ndarray:
        """``B * sum_s beta_s * eff`` per (BS, AV); the rate at fraction one."""
        return self.bandwidth * self.table.coefficients(beta)

    def arrays(self, beta):
        coef = self.rate_coefficients(beta)
        valid = self.table.cover & (coef > 0)
        with np.errstate(divide="ignore"):
            logc = np.where(valid, np.log(np.where(valid, coef, 1.0)), -np.inf)
            fmin = np.where(valid, self.min_rates[None, :] / np.where(valid, coef, 1.0), np.inf)
        return coef, valid, logc, fmin

    def max_sinr_association(self) -> np.ndarray:
        """Row index into ``bs_ids`` of the covering BS with the highest SINR on its own slice."""
        t = self.table
        J = len(self.bs_ids)
        g = t.sinr[np.arange(J), :, t.primary_slice]
        g = np.where(t.cover, g, -np.inf)
        return np.argmax(g, axis=0)  # first maximum -> lowest id on ties

    def solution(self, beta, assoc: np.ndarray, trace=()) -> SlicingSolution:
        """Evaluate a (beta, association) pair with optimal fractions per BS."""
        beta = np.asarray(beta, dtype=float)
        pattern = build_reuse_pattern(self.s, self.mec, beta)
        coef = self.rate_coefficients(beta)
        N = len(self.av_ids)
        diag = []
        fractions, rates = {}, {}
        feasible = True
        utility = 0.0
        for j, bid in enumerate(self.bs_ids):
            members = np.flatnonzero(assoc == j)
            if members.size == 0:
                continue
            c = coef[j, members]
            bad = [self.av_ids[k] for k, cc in zip(members, c) if not cc > 0]
            if bad or not self.table.cover[j, members].all():
                feasible = False
                diag.append(f"{bid}: zero bandwidth or no coverage for AVs {bad}")
                f = np.full(members.size, 1.0 / members.size)
            else:
                f = optimal_fractions(self.min_rates[members] / c)
                if f is None:
                    feasible = False
                    need = float((self.min_rates[members] / c).sum())
                    diag.append(f"{bid}: minimum rates need {need:.4g} of the BS's bandwidth")
                    f = np.full(members.size, 1.0 / members.size)
            for k, ff, cc in zip(members, f, c):
                av = self.av_ids[k]
                fractions[(bid, av)] = float(ff)
                rates[av] = float(cc * ff)
                if rates[av] > 0:
                    utility += math.log(rates[av])
        if N and (assoc < 0).any():
            feasible = False
            diag.append("unassociated AVs")
        return SlicingSolution(
            mec_id=self.mec.id,
            pattern=pattern,
            association={self.av_ids[k]: self.bs_ids[assoc[k]] for k in range(N) if assoc[k] >= 0},
            fractions=fractions,
            rates_bps=rates,
            utility=utility,
            feasible=feasible,
            diagnostics=tuple(diag),
            trace=tuple(trace),
        )

    def max_moves(self) -> int:
        return 50 * len(self.av_ids) + 100

    def search_beta(self, beta, start: np.ndarray | None = None):
        """Greedy (or ``start``) association plus local search at one beta.

        Returns ``(score, assoc, trace)``; the score equals the utility of the
        association and is ``-inf`` if no feasible association was reached.
        """
        start = np.empty(0, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
        score, assoc, trace = _search.search_one(
            self.table.eff, self.table.cover, float(self.bandwidth), self.min_rates,
            np.asarray(beta, dtype=float), start, self.max_moves(),
        )
        return float(score), assoc, tuple(trace)

    def search_grid(self, grid: np.ndarray):
        i, score, assoc, trace = _search.search_grid(
            self.table.eff, self.table.cover, float(self.bandwidth), self.min_rates,
            np.ascontiguousarray(grid, dtype=float), self.max_moves(),
        )
        return int(i), float(score), assoc, tuple(trace)


def _baseline_beta(n_slices: int, settings: SolverSettings) -> np.ndarray:
    if settings.baseline_beta is not None:
        beta = np.asarray(settings.baseline_beta, dtype=float)
        if beta.size != n_slices:
            raise ValueError(f"baseline_beta has {beta.size} entries, MEC server has {n_slices} slices")
        if abs(beta.sum() - 1) > 1e-9 or (beta < 0).any():
            raise ValueError("baseline_beta must lie on the simplex")
        return beta
    return np.full(n_slices, 1.0 / n_slices)


def evaluate(s: Scenario, mec: MecServer, beta, association: dict[int, str],
             settings: SolverSettings = SolverSettings(),
             extra_min_rates: dict[int, float] | None = None) -> SlicingSolution:
    """Rates, fractions and utility of a given slicing and association.

    ``association`` must name a covering BS of ``mec`` for every AV it lists;
    only those AVs are considered.
    """
    beta = np.asarray(beta, dtype=float)
    if abs(beta.sum() - 1.0) > 1e-9 or (beta < 0).any():
        raise ValueError(f"beta {beta} is not on the simplex")
    av_ids = tuple(sorted(association))
    prob = SlicingProblem(s, mec, settings, extra_min_rates, av_ids)
    index = {b: j for j, b in enumerate(prob.bs_ids)}
    assoc = np.array([index[association[k]] for k in av_ids], dtype=int)
    if assoc.size and not prob.table.cover[assoc, np.arange(assoc.size)].all():
        raise ValueError("association assigns an AV to a BS that does not cover it")
    return prob.solution(beta, assoc)


def _empty_solution(prob: SlicingProblem, beta) -> SlicingSolution:
    return prob.solution(beta, np.empty(0, dtype=int))


def solve_num(s: Scenario, mec: MecServer, grid_step: float | None = None,
              settings: SolverSettings = SolverSettings(),
              extra_min_rates: dict[int, float] | None = None,
              av_ids=None, problem: SlicingProblem | None = None) -> SlicingSolution:
    """Network-utility-maximising slice ratios and association for one MEC server.

    Every beta on the simplex grid gets a greedy association refined by 1-move
    local search. The max-SINR baseline point (its fixed beta and association)
    is searched as one more start, so the result never falls below it. The
    best feasible point wins; ties keep the lexicographically smallest beta.
    """
    step = settings.grid_step if grid_step is None else grid_step
    if not 0 < step <= 0.5:
        raise ValueError("grid_step must lie in (0, 0.5]")
    prob = problem or SlicingProblem(s, mec, settings, extra_min_rates, av_ids)
    S = prob.n_slices
    if not prob.av_ids:
        return _empty_solution(prob, np.full(S, 1.0 / S))

    grid = simplex_grid(S, step)
    i, score, assoc, trace = prob.search_grid(grid)
    best = (score, grid[i] if i >= 0 else None, assoc, trace)

    b0 = _baseline_beta(S, settings)
    score, assoc, trace = prob.search_beta(b0, start=prob.max_sinr_association())
    if score > best[0] + _TOL:
        best = (score, b0, assoc, trace)

    if best[1] is None:
        sol = solve_max_sinr(s, mec, b0, settings, extra_min_rates, problem=prob)
        sol.feasible = False
        sol.diagnostics = ("no feasible slicing on the grid",) + sol.diagnostics
        return sol
    _, beta, assoc, trace = best
    return prob.solution(beta, assoc, trace)


def solve_max_sinr(s: Scenario, mec: MecServer, fixed_beta=None,
                   settings: SolverSettings = SolverSettings(),
                   extra_min_rates: dict[int, float] | None = None,
                   av_ids=None, problem: SlicingProblem | None = None) -> SlicingSolution:
    """Baseline: fixed slice ratios, each AV on its highest-SINR covering BS."""
    prob = problem or SlicingProblem(s, mec, settings, extra_min_rates, av_ids)
    beta = _baseline_beta(prob.n_slices, settings) if fixed_beta is None else np.asarray(fixed_beta, float)
    if abs(beta.sum() - 1.0) > 1e-9 or (beta < 0).any():
        raise ValueError(f"beta {beta} is not on the simplex")
    if not prob.av_ids:
        return _empty_solution(prob, beta)
    return prob.solution(beta, prob.max_sinr_association())


