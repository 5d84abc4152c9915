"""
A snapshot of the road
======================

Draw one random road at 0.12 AVs per metre and look at who is where.
"""
from collections import Counter

import numpy as np

from avnet import ScenarioConfig, coverage_set, generate_case_study

config = ScenarioConfig()
s = generate_case_study(0.12, seed=1, config=config)
print(f"{len(s.vehicles)} AVs on a {s.road.length_m:.0f} m, {s.road.lanes}-lane road")

# per-lane occupancy and the tightest gap in each lane
for lane in range(s.road.lanes):
    xs = np.sort([v.position_m[0] for v in s.vehicles if v.lane == lane])
    print(f"lane {lane}: {xs.size:3d} AVs, smallest gap {np.diff(xs).min():5.1f} m")

# application mix
kinds = Counter(v.app.kind.value for v in s.vehicles)
print(dict(kinds))

# how many BSs can hear each AV
sizes = Counter(len(coverage_set(s, v)) for v in s.vehicles)
print("coverage set sizes:", dict(sorted(sizes.items())))

# the scenario is plain data and round-trips through JSON
print(s.to_json()[:200], "...")
