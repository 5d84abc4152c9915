"""
How much rate does a safety message need?
=========================================

The M/M/1 tail model gives a closed form; a simulation checks it.
"""
import numpy as np

from avnet.config import QosTable
from avnet.oracles import empirical_violation, simulate_mm1_sojourn
from avnet.qos import required_rate, transmission_delay

safety = QosTable().delay_sensitive
hd_map = QosTable().delay_tolerant

r = required_rate(safety).min_rate_bps
print(f"safety messages need {r:,.0f} b/s; HD maps need {required_rate(hd_map).min_rate_bps:,.0f} b/s")
print(f"mean delay at that rate: {1e3 * transmission_delay(r, safety):.2f} ms")

# simulate a million packets at a few rates around the requirement
for scale in (0.9, 1.0, 1.2):
    v = empirical_violation(safety, scale * r, 1_000_000, seed=0)
    print(f"rate x{scale:.1f}: P(delay > 100 ms) = {v:.2e}")

soj = simulate_mm1_sojourn(safety.arrival_rate_pps, r / safety.packet_size_bits, 200_000, seed=1)
print("simulated mean sojourn", soj.mean(), "vs formula", transmission_delay(r, safety))
