"""
A small density sweep
=====================

Two densities, three replications each; then aggregate for plotting.
"""
import tempfile
from dataclasses import replace
from pathlib import Path

from avnet import ScenarioConfig, plotdata, run_sweep

config = replace(ScenarioConfig(), densities=(0.12, 0.24), replications=3)
out = Path(tempfile.mkdtemp()) / "sweep.csv"
records = run_sweep(config, out)

for r in records:
    print(f"density {r.density:.2f} rep {r.replication}: beta ({r.beta1:.2f}, {r.beta2:.2f}, {r.beta_w:.2f}) "
          f"gain {r.utility_gain:7.1f}  N_AP {r.n_ap_avg:5.1f} (baseline {r.baseline_n_ap_avg:4.1f})")

for p in plotdata(out, out.parent / "plots"):
    print(f"\n{p.name}\n{p.read_text()}")
