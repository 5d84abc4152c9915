"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

The full density sweep runs twice through the CLI (serial and with two
workers) and both CSVs feed criteria 1-3 and 8.
"""
import csv
import math
import time
from collections import defaultdict
from dataclasses import replace

import numpy as np
import pytest

from avnet.cli import main
from avnet.config import CASE_STUDY_DENSITIES, ScenarioConfig
from avnet.harness import baseline_path
from avnet.mec import joint_solve
from avnet.oracles import _mec_checks, _slicing_checks, empirical_violation
from avnet.qos import required_rate
from avnet.radio import pathloss_db, received_power_dbm
from avnet.scenario import MecServer, generate_case_study

from helpers import DS, ap, enb

SWEEP_BUDGET_S = 600.0


def report(capsys, n, title, passed, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {n}: {title} -- {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    d = tmp_path_factory.mktemp("acceptance")
    out = d / "sweep.csv"
    t0 = time.perf_counter()
    code = main(["sweep", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    rows = list(csv.DictReader(out.open()))
    side = {(r["density"], r["replication"]): r for r in csv.DictReader(baseline_path(out).open())}
    return {"dir": d, "out": out, "code": code, "elapsed": elapsed, "rows": rows, "side": side}


def _by_density(rows):
    out = defaultdict(list)
    for r in rows:
        out[float(r["density"])].append(r)
    return dict(sorted(out.items()))


def test_1_baseline_dominance(sweep, capsys):
    groups = _by_density(sweep["rows"])
    worst, means, bad = math.inf, {}, []
    for d, rs in groups.items():
        ok = [r for r in rs if r["feasible"] == "true"]
        gains = [float(r["utility_gain"]) for r in ok]
        means[d] = float(np.mean(gains)) if gains else -math.inf
        for r in ok:
            if float(r["utility_proposed"]) < float(r["utility_baseline"]):
                bad.append((d, r["replication"]))
        worst = min([worst] + gains)
    passed = (sweep["code"] == 0 and set(groups) == set(CASE_STUDY_DENSITIES)
              and all(len(rs) == 20 for rs in groups.values())
              and all(m > 0 for m in means.values()) and not bad and sweep["elapsed"] < SWEEP_BUDGET_S)
    detail = (f"{len(sweep['rows'])} rows in {sweep['elapsed']:.0f} s; mean gain per density "
              f"{', '.join(f'{d:.2f}:{m:.1f}' for d, m in means.items())}; smallest single gain {worst:.2f}; "
              f"instances below baseline {bad}")
    report(capsys, 1, "baseline dominance", passed, detail)


def test_2_load_balancing(sweep, capsys):
    lines, passed = [], True
    for d, rs in _by_density(sweep["rows"]).items():
        ok = [r for r in rs if r["feasible"] == "true"]
        ap_prop = np.mean([float(r["n_ap_avg"]) for r in ok])
        base = [sweep["side"][(r["density"], r["replication"])] for r in ok]
        ap_base = np.mean([float(b["n_ap_avg"]) for b in base])
        enb_base = np.mean([float(b["n_enb_avg"]) for b in base])
        passed &= bool(ap_prop > ap_base and enb_base >= 3 * ap_base)
        lines.append(f"{d:.2f}: N_AP {ap_prop:.1f} vs {ap_base:.1f}, baseline N_eNB {enb_base:.1f}")
    report(capsys, 2, "load balancing", passed, "; ".join(lines))


def test_3_adaptive_ratios(sweep, capsys):
    step = ScenarioConfig().solver.grid_step
    means = {}
    for d, rs in _by_density(sweep["rows"]).items():
        ok = [r for r in rs if r["feasible"] == "true"]
        means[d] = np.mean([[float(r[k]) for k in ("beta1", "beta2", "beta_w")] for r in ok], axis=0)
    ds = list(means)
    spread = max(float(np.abs(means[a] - means[b]).max()) for i, a in enumerate(ds) for b in ds[i + 1:])
    detail = f"largest per-density mean beta difference {spread:.3f} vs grid step {step}"
    report(capsys, 3, "adaptive slice ratios", spread > step, detail)


def test_4_slicing_oracle(capsys):
    t0 = time.perf_counter()
    check = _slicing_checks(np.random.default_rng(2024), 50, 0.05)
    elapsed = time.perf_counter() - t0
    report(capsys, 4, "slicing vs exhaustive enumeration", check.passed and elapsed < 60,
           f"{check.detail}; {elapsed:.1f} s")


def test_5_mec_oracle(capsys):
    check = _mec_checks(np.random.default_rng(2025), 50)
    report(capsys, 5, "placement vs brute force", check.passed, check.detail)


def test_6_queue_validation(capsys):
    r = required_rate(DS).min_rate_bps
    v = empirical_violation(DS, r, 1_000_000, seed=6)
    passed = abs(r - 76_586) < 1 and v <= 1.5e-3
    report(capsys, 6, "M/M/1 delay tail at the required rate", passed,
           f"rate {r:.1f} b/s, empirical P(delay > 0.1 s) = {v:.2e} over 1e6 packets")


def test_7_radio_arithmetic(capsys):
    e, a = enb("S1", 0.0), ap("AP1", 0.0)
    p_enb = received_power_dbm(e, 100.0)
    p_ap = received_power_dbm(a, 50.0)
    want_ap = 28.45 + (-40.0 - 35.0 * math.log10(50.0))
    passed = abs(p_enb - (-60.0)) <= 0.01 and abs(p_ap - want_ap) <= 0.01 and abs(p_ap - (-71.01)) <= 0.01
    detail = (f"eNB at 100 m {p_enb:.4f} dBm (pathloss {pathloss_db(e, 100.0):.2f} dB); "
              f"AP at 50 m {p_ap:.4f} dBm")
    report(capsys, 7, "pathloss and received power", passed, detail)


def test_8_determinism(sweep, capsys):
    again = sweep["dir"] / "sweep_jobs2.csv"
    code = main(["sweep", "--out", str(again), "--jobs", "2"])
    same = again.read_bytes() == sweep["out"].read_bytes()
    same_side = baseline_path(again).read_bytes() == baseline_path(sweep["out"]).read_bytes()
    report(capsys, 8, "byte-identical sweep output", code == 0 and same and same_side,
           f"serial vs --jobs 2: CSV identical={same}, sidecar identical={same_side}")


def two_server_config() -> ScenarioConfig:
    """Case-study road split over two MEC servers; the western one is short of capacity."""
    mecs = (MecServer("M1", 3e9, 1e9, 25e6, ("S1", "AP1", "AP2", "AP3")),
            MecServer("M2", 9e9, 3e9, 25e6, ("S2", "AP4", "AP5", "AP6")))
    return replace(ScenarioConfig(), mec_servers=mecs)


def test_9_migration_monotone_in_kappa(capsys):
    cfg = two_server_config()
    s = generate_case_study(0.16, 7, cfg)
    kappas = (0.0, 0.5, 1.0, 2.0, 10.0)
    vols = [joint_solve(s, cfg.with_solver(kappa=k)).assignment.migrated_volume for k in kappas]
    passed = all(b <= a for a, b in zip(vols, vols[1:])) and vols[0] > 0
    detail = ", ".join(f"kappa {k}: {v:.4f}" for k, v in zip(kappas, vols))
    report(capsys, 9, "migrated volume non-increasing in kappa", passed, detail)
