"""Seeded density sweeps and their CSV outputs.

Each sweep cell ``(density, replication)`` gets its own seed, generates a
road, runs the joint solver and the max-SINR baseline, and becomes one CSV
row. Rows are written in ``(density, replication)`` order whatever order the
cells finish in, so output bytes depend only on the configuration.
"""
from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .mec import joint_solve
from .radio import WIFI_SLICE
from .scenario import BsKind, Scenario, generate_case_study
from .slicing import home_mec_members, solve_max_sinr

CSV_HEADER = ("density", "replication", "seed", "beta1", "beta2", "beta_w", "utility_proposed",
              "utility_baseline", "utility_gain", "n_ap_avg", "n_enb_avg", "mec_utility",
              "migrated_volume", "feasible", "error")
BASELINE_HEADER = ("density", "replication", "seed", "n_ap_avg", "n_enb_avg", "feasible")
SEED_MASK = (1 << 64) - 1


class SeedCollisionError(RuntimeError):
    pass


def cell_seed(base_seed: int, density: float, replication: int) -> int:
    """``base_seed`` XOR a 64-bit hash of the cell, so adding densities leaves other rows alone."""
    digest = hashlib.blake2b(f"{float(density)!r}/{int(replication)}".encode(), digest_size=8).digest()
    return (int(base_seed) ^ int.from_bytes(digest, "big")) & SEED_MASK


@dataclass
class SweepRecord:
    density: float
    replication: int
    seed: int
    beta1: float = math.nan
    beta2: float = math.nan
    beta_w: float = math.nan
    utility_proposed: float = math.nan
    utility_baseline: float = math.nan
    utility_gain: float = math.nan
    n_ap_avg: float = math.nan
    n_enb_avg: float = math.nan
    mec_utility: float = math.nan
    migrated_volume: float = math.nan
    feasible: bool = False
    error: str = ""
    # baseline association counts, written to the sidecar file
    baseline_n_ap_avg: float = math.nan
    baseline_n_enb_avg: float = math.nan
    baseline_feasible: bool = False

    def row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in CSV_HEADER]

    def baseline_row(self) -> list[str]:
        return [_fmt(v) for v in (self.density, self.replication, self.seed, self.baseline_n_ap_avg,
                                  self.baseline_n_enb_avg, self.baseline_feasible)]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def average_counts(s: Scenario, association: dict[int, str]) -> tuple[float, float]:
    """Average AVs per AP and per eNB."""
    n_ap = sum(1 for b in s.base_stations if b.kind is BsKind.WIFI_AP)
    n_enb = sum(1 for b in s.base_stations if b.kind is BsKind.ENB)
    on_ap = sum(1 for b in association.values() if s.bs(b).kind is BsKind.WIFI_AP)
    on_enb = len(association) - on_ap
    return (on_ap / n_ap if n_ap else math.nan), (on_enb / n_enb if n_enb else math.nan)


def _betas(sol) -> tuple[float, float, float]:
    """First two eNB slice ratios and the Wi-Fi ratio of one MEC server's solution."""
    ratios = dict(sol.pattern.slices)
    enb = [r for sid, r in sol.pattern.slices if sid != WIFI_SLICE]
    enb += [math.nan] * (2 - len(enb))
    return float(enb[0]), float(enb[1]), float(ratios.get(WIFI_SLICE, math.nan))


def run_cell(config: ScenarioConfig, density: float, replication: int) -> SweepRecord:
    seed = cell_seed(config.base_seed, density, replication)
    rec = SweepRecord(float(density), int(replication), seed)
    try:
        s = generate_case_study(density, seed, config)
        settings = config.solver
        res = joint_solve(s, config)
        members = home_mec_members(s, settings.d_min_m)
        base = [solve_max_sinr(s, m, settings=settings, av_ids=members[m.id]) for m in s.mec_servers]
        rec.beta1, rec.beta2, rec.beta_w = _betas(res.slicing[s.mec_servers[0].id])
        rec.utility_proposed = float(res.slicing_utility)
        rec.utility_baseline = float(sum(b.utility for b in base))
        rec.utility_gain = rec.utility_proposed - rec.utility_baseline
        rec.n_ap_avg, rec.n_enb_avg = average_counts(s, res.association)
        rec.mec_utility = float(res.assignment.utility)
        rec.migrated_volume = float(res.assignment.migrated_volume)
        rec.feasible = bool(res.feasible)
        base_assoc = {}
        for b in base:
            base_assoc.update(b.association)
        rec.baseline_n_ap_avg, rec.baseline_n_enb_avg = average_counts(s, base_assoc)
        rec.baseline_feasible = all(b.feasible for b in base)
    except Exception as exc:  # one bad cell must not stop the sweep
        rec.feasible = False
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def _run_cell_args(args) -> SweepRecord:
    return run_cell(*args)


def sweep_cells(config: ScenarioConfig) -> list[tuple[float, int]]:
    cells = sorted((float(d), r) for d in set(config.densities) for r in range(config.replications))
    seeds = [cell_seed(config.base_seed, d, r) for d, r in cells]
    if len(set(seeds)) != len(seeds):
        raise SeedCollisionError("two sweep cells derived the same seed")
    return cells


def baseline_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_baseline" + (out.suffix or ".csv"))


def write_records(records, out: str | Path):
    out = Path(out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())
    with baseline_path(out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BASELINE_HEADER)
        for r in records:
            w.writerow(r.baseline_row())


def run_sweep(config: ScenarioConfig, out: str | Path | None = None, jobs: int = 1) -> list[SweepRecord]:
    """Run every ``(density, replication)`` cell; write the CSV (and baseline sidecar) if ``out`` is given."""
    cells = sweep_cells(config)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell_args, [(config, d, r) for d, r in cells], chunksize=1))
    else:
        records = [run_cell(config, d, r) for d, r in cells]
    records.sort(key=lambda r: (r.density, r.replication))
    if out is not None:
        write_records(records, out)
    return records


def read_sweep(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected sweep header {reader.fieldnames}")
        return list(reader)


def _num(x: str) -> float:
    return float(x) if x != "" else math.nan


def plotdata(sweep_csv: str | Path, out_dir: str | Path) -> list[Path]:
    """Aggregate a sweep CSV into per-figure CSVs; returns the files written.

    ``gain_vs_beta_by_density.csv`` and ``gain_vs_beta_by_gain.csv`` hold the
    same per-density bars (mean gain and mean slice ratios) in two orders.
    ``association_counts.csv`` compares average AVs per AP and per eNB with
    the baseline (read from the sidecar next to the sweep CSV, if present).
    Only feasible, error-free rows are aggregated.
    """
    rows = [r for r in read_sweep(sweep_csv) if r["feasible"] == "true" and not r["error"]]
    side = {}
    bp = baseline_path(sweep_csv)
    if bp.is_file():
        with bp.open(newline="") as fh:
            for r in csv.DictReader(fh):
                side[(r["density"], r["replication"])] = r
    by_density: dict[float, list[dict]] = {}
    for r in rows:
        by_density.setdefault(float(r["density"]), []).append(r)

    def mean(rs, key, src=None):
        vals = []
        for r in rs:
            rr = r if src is None else src.get((r["density"], r["replication"]))
            if rr is not None:
                vals.append(_num(rr[key]))
        vals = [v for v in vals if not math.isnan(v)]
        return float(np.mean(vals)) if vals else math.nan

    bars = []
    counts = []
    for d in sorted(by_density):
        rs = by_density[d]
        gains = np.array([_num(r["utility_gain"]) for r in rs])
        bars.append([d, len(rs), float(gains.mean()), float(gains.std()),
                     mean(rs, "beta1"), mean(rs, "beta2"), mean(rs, "beta_w")])
        counts.append([d, len(rs), mean(rs, "n_ap_avg"), mean(rs, "n_ap_avg", side),
                       mean(rs, "n_enb_avg"), mean(rs, "n_enb_avg", side)])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bar_header = ["density", "n", "gain_mean", "gain_std", "beta1_mean", "beta2_mean", "beta_w_mean"]
    written = [
        _write(out_dir / "gain_vs_beta_by_density.csv", bar_header, bars),
        _write(out_dir / "gain_vs_beta_by_gain.csv", bar_header,
               sorted(bars, key=lambda b: (-b[2], b[0]))),
        _write(out_dir / "association_counts.csv",
               ["density", "n", "n_ap_proposed", "n_ap_baseline", "n_enb_proposed", "n_enb_baseline"], counts),
    ]
    return written


def _write(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, float) else str(x) for x in r])
    return path

