"""Rate requirements and delay checks derived from application profiles.

Delay-sensitive traffic is modelled as an M/M/1 queue with Poisson arrivals
(``lam`` packets/s) and exponential service of mean ``L / r`` at link rate
``r``. Its sojourn time is exponential with rate ``r/L - lam``, so

    P(delay > D) = exp(-(r/L - lam) * D) <= eps   <=>   r >= L * (lam + ln(1/eps) / D).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .scenario import ApplicationProfile


class RateSource(str, Enum):
    EFFECTIVE_BANDWIDTH = "EFFECTIVE_BANDWIDTH"
    RATE_THRESHOLD = "RATE_THRESHOLD"


@dataclass(frozen=True)
class RateRequirement:
    av_id: int | None
    min_rate_bps: float
    source: RateSource

    def __post_init__(self):
        if not self.min_rate_bps > 0:
            raise ValueError("min_rate_bps must be positive")


@dataclass(frozen=True)
class DelayBudget:
    av_id: int | None
    processing_s: float
    transmission_s: float
    response_threshold_s: float
    latency_threshold_s: float | None = None

    def __post_init__(self):
        vals = [self.processing_s, self.transmission_s, self.response_threshold_s]
        if self.latency_threshold_s is not None:
            vals.append(self.latency_threshold_s)
        if any(v < 0 for v in vals):
            raise ValueError("delay budget entries must be nonnegative")


def effective_rate_bps(arrival_rate_pps: float, packet_size_bits: float,
                       delay_bound_s: float, violation_prob: float) -> float:
    if not 0 < violation_prob < 1:
        raise ValueError(f"violation probability must lie in (0, 1), got {violation_prob}")
    if not delay_bound_s > 0:
        raise ValueError(f"delay bound must be positive, got {delay_bound_s}")
    return packet_size_bits * (arrival_rate_pps + math.log(1.0 / violation_prob) / delay_bound_s)


def required_rate(app: ApplicationProfile, av_id: int | None = None) -> RateRequirement:
    if app.delay_sensitive:
        r = effective_rate_bps(app.arrival_rate_pps, app.packet_size_bits,
                               app.delay_bound_s, app.violation_prob)
        return RateRequirement(av_id, r, RateSource.EFFECTIVE_BANDWIDTH)
    r = app.rate_threshold_bps
    if r is None:
        r = app.arrival_rate_pps * app.packet_size_bits
    return RateRequirement(av_id, r, RateSource.RATE_THRESHOLD)


def transmission_delay(rate_bps: float, app: ApplicationProfile) -> float:
    """Mean M/M/1 sojourn ``1 / (rate/L - lam)``; ``inf`` when the queue is unstable."""
    margin = rate_bps / app.packet_size_bits - app.arrival_rate_pps
    if margin <= 0:
        return math.inf
    return 1.0 / margin


def rate_for_delay(app: ApplicationProfile, max_delay_s: float) -> float:
    """Smallest rate whose mean sojourn does not exceed ``max_delay_s`` (``inf`` if ``max_delay_s <= 0``)."""
    if max_delay_s <= 0:
        return math.inf
    return app.packet_size_bits * (app.arrival_rate_pps + 1.0 / max_delay_s)


def check_delay_constraints(b: DelayBudget) -> bool:
    total = b.processing_s + b.transmission_s
    if total > b.response_threshold_s:
        return False
    if b.latency_threshold_s is not None and total > b.latency_threshold_s:
        return False
    return True
