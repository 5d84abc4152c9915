"""
Placing tasks on MEC servers
============================

Split the road over two MEC servers, one of them small, and watch the
migration cost trade against utilisation.
"""
from dataclasses import replace

from avnet import MecServer, ScenarioConfig, generate_case_study, joint_solve

mecs = (MecServer("M1", 3e9, 1e9, 25e6, ("S1", "AP1", "AP2", "AP3")),
        MecServer("M2", 9e9, 3e9, 25e6, ("S2", "AP4", "AP5", "AP6")))
config = replace(ScenarioConfig(), mec_servers=mecs)
s = generate_case_study(0.16, seed=7, config=config)

for kappa in (0.0, 0.5, 1.0, 2.0, 10.0):
    res = joint_solve(s, config.with_solver(kappa=kappa))
    a = res.assignment
    util = {m: round(a.per_server_compute_util[m], 2) for m in ("M1", "M2")}
    on_cloud = sum(v == "CLOUD" for v in a.compute_server.values())
    print(f"kappa {kappa:4.1f}: migrated {a.migrated_volume:.3f}, compute util {util}, "
          f"{on_cloud} compute tasks on the cloud, utility {a.utility:.3f}")
