"""
Slicing versus max-SINR
=======================

Search slice ratios and associations, then compare with the max-SINR rule.
"""
from collections import Counter

from avnet import ScenarioConfig, generate_case_study, solve_max_sinr, solve_num

s = generate_case_study(0.2, seed=3, config=ScenarioConfig())
mec = s.mec_servers[0]

base = solve_max_sinr(s, mec)
best = solve_num(s, mec)

print("baseline  beta", base.beta.round(3), "utility", round(base.utility, 1))
print("proposed  beta", best.beta.round(3), "utility", round(best.utility, 1))
print("gain", round(best.utility - base.utility, 1))

# where the AVs end up
for name, sol in (("baseline", base), ("proposed", best)):
    print(name, dict(sorted(Counter(sol.association.values()).items())))

# slowest AVs under each scheme
for name, sol in (("baseline", base), ("proposed", best)):
    slow = sorted(sol.rates_bps.values())[:3]
    print(name, "three lowest rates (kb/s):", [round(x / 1e3, 1) for x in slow])
