"""
Link budget along the road
==========================

Received power, SINR and spectral efficiency as an AV drives past AP 4.
"""
import numpy as np

from avnet import ScenarioConfig, build_reuse_pattern, generate_case_study, received_power_dbm
from avnet.radio import reuse_structure, sinr, spectral_efficiency
from avnet.scenario import Vehicle, distance_m
from dataclasses import replace

s = generate_case_study(0.12, seed=1, config=ScenarioConfig())
mec = s.mec_servers[0]

# which slices each BS transmits on
for bs, slices in sorted(reuse_structure(s, mec).items()):
    print(f"{bs:4s} -> {sorted(slices)}")

# spot values straight from the pathloss formulas
print("eNB at 100 m:", received_power_dbm(s.bs("S1"), 100.0), "dBm")
print("AP at 50 m:  ", round(received_power_dbm(s.bs("AP1"), 50.0), 2), "dBm")

rp = build_reuse_pattern(s, mec, [1 / 3, 1 / 3, 1 / 3])
probe = s.vehicles[0]
print("\n   x    AP4 W-slice SINR dB   S1 SINR dB   AP4 eff (W)")
for x in np.arange(420.0, 760.0, 40.0):
    v = replace(probe, id=99_999, position_m=(float(x), probe.position_m[1]))
    t = replace(s, vehicles=s.vehicles + (v,))
    g_ap = sinr(t, rp, "AP4", v.id, "W") if distance_m(t.bs("AP4").position_m, v.position_m) <= t.bs("AP4").range_m else np.nan
    g_s1 = sinr(t, rp, "S1", v.id, "S1")
    eff = spectral_efficiency(t, rp, "AP4", v.id, "W") if np.isfinite(g_ap) else np.nan
    print(f"{x:6.0f} {10 * np.log10(g_ap):18.1f} {10 * np.log10(g_s1):12.1f} {eff:12.2f}")
