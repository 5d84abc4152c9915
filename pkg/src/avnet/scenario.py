"""Road/AV/BS/MEC snapshots for one time slot and the seeded case-study generator."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .config import ScenarioConfig

DENSITY_RANGE = (0.12, 0.40)


class GenerationError(RuntimeError):
    pass


class BsKind(str, Enum):
    ENB = "ENB"
    WIFI_AP = "WIFI_AP"


class AppKind(str, Enum):
    DELAY_SENSITIVE = "DELAY_SENSITIVE"
    DELAY_TOLERANT = "DELAY_TOLERANT"


@dataclass(frozen=True)
class RoadGeometry:
    length_m: float = 1000.0
    lanes: int = 4
    lane_width_m: float = 3.5

    def __post_init__(self):
        if not self.length_m > 0:
            raise ValueError(f"road length must be positive, got {self.length_m}")
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise ValueError(f"lanes must be a positive integer, got {self.lanes}")
        if not self.lane_width_m > 0:
            raise ValueError(f"lane width must be positive, got {self.lane_width_m}")

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width_m

    @property
    def width_m(self) -> float:
        return self.lanes * self.lane_width_m


@dataclass(frozen=True)
class BaseStation:
    """A downlink transmitter.

    ``reuse_radius_m`` is the radius of the disk an eNB protects when the
    reuse pattern decides which APs may share its dedicated slice; it
    defaults to ``range_m`` (plain coverage-disk test).
    """

    id: str
    kind: BsKind
    position_m: tuple[float, float]
    tx_power_dbm: float
    range_m: float
    pathloss_a_db: float
    pathloss_b_db: float
    mac_efficiency: float = 1.0
    reuse_radius_m: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BsKind(self.kind))
        object.__setattr__(self, "position_m", (float(self.position_m[0]), float(self.position_m[1])))
        if not self.range_m > 0:
            raise ValueError(f"{self.id}: range_m must be positive")
        if not 0 < self.mac_efficiency <= 1:
            raise ValueError(f"{self.id}: mac_efficiency must lie in (0, 1]")
        if self.kind is BsKind.ENB and self.mac_efficiency != 1:
            raise ValueError(f"{self.id}: an eNB has mac_efficiency 1")
        if self.reuse_radius_m is not None and not self.reuse_radius_m > 0:
            raise ValueError(f"{self.id}: reuse_radius_m must be positive")

    @property
    def protected_radius_m(self) -> float:
        return self.range_m if self.reuse_radius_m is None else self.reuse_radius_m


@dataclass(frozen=True)
class ApplicationProfile:
    kind: AppKind
    arrival_rate_pps: float
    packet_size_bits: float
    delay_bound_s: float | None = None
    violation_prob: float | None = None
    rate_threshold_bps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AppKind(self.kind))
        if not self.arrival_rate_pps > 0:
            raise ValueError("arrival_rate_pps must be positive")
        if not self.packet_size_bits > 0:
            raise ValueError("packet_size_bits must be positive")
        if self.kind is AppKind.DELAY_SENSITIVE:
            if self.delay_bound_s is None or self.violation_prob is None:
                raise ValueError("a delay-sensitive profile needs delay_bound_s and violation_prob")
            if not 0 < self.violation_prob < 1:
                raise ValueError("violation_prob must lie in (0, 1)")
        elif self.rate_threshold_bps is not None and not self.rate_threshold_bps > 0:
            raise ValueError("rate_threshold_bps must be positive when set")

    @property
    def delay_sensitive(self) -> bool:
        return self.kind is AppKind.DELAY_SENSITIVE


@dataclass(frozen=True)
class Vehicle:
    id: int
    position_m: tuple[float, float]
    lane: int
    app: ApplicationProfile
    compute_demand: float
    storage_demand: float
    workload_cycles: float
    response_threshold_s: float
    latency_threshold_s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "position_m", (float(self.position_m[0]), float(self.position_m[1])))
        if self.compute_demand < 0 or self.storage_demand < 0 or self.workload_cycles < 0:
            raise ValueError(f"vehicle {self.id}: demands must be nonnegative")
        if (self.compute_demand == 0) != (self.workload_cycles == 0):
            raise ValueError(f"vehicle {self.id}: compute_demand and workload_cycles must be zero together")
        if self.latency_threshold_s is not None and self.latency_threshold_s > self.response_threshold_s:
            raise ValueError(f"vehicle {self.id}: latency threshold exceeds response threshold")


@dataclass(frozen=True)
class MecServer:
    id: str
    compute_capacity: float
    storage_capacity: float
    bandwidth_hz: float
    bs_ids: tuple[str, ...]
    backhaul_delay_s: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "bs_ids", tuple(self.bs_ids))
        if not (self.compute_capacity > 0 and self.storage_capacity > 0 and self.bandwidth_hz > 0):
            raise ValueError(f"{self.id}: capacities must be positive")
        if not self.bs_ids:
            raise ValueError(f"{self.id}: service area needs at least one BS")
        if self.backhaul_delay_s < 0:
            raise ValueError(f"{self.id}: backhaul delay must be nonnegative")


@dataclass(frozen=True)
class Scenario:
    road: RoadGeometry
    vehicles: tuple[Vehicle, ...]
    base_stations: tuple[BaseStation, ...]
    mec_servers: tuple[MecServer, ...]
    noise_dbm: float = -104.0
    seed: int = 0
    _bs_index: dict = field(init=False, repr=False, compare=False)
    _av_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        object.__setattr__(self, "base_stations", tuple(self.base_stations))
        object.__setattr__(self, "mec_servers", tuple(self.mec_servers))
        object.__setattr__(self, "_bs_index", {b.id: b for b in self.base_stations})
        object.__setattr__(self, "_av_index", {v.id: v for v in self.vehicles})
        if len(self._bs_index) != len(self.base_stations):
            raise ValueError("duplicate base station id")
        if len(self._av_index) != len(self.vehicles):
            raise ValueError("duplicate vehicle id")
        owners: dict[str, str] = {}
        for m in self.mec_servers:
            for b in m.bs_ids:
                if b not in self._bs_index:
                    raise ValueError(f"{m.id} references unknown BS {b}")
                if b in owners:
                    raise ValueError(f"BS {b} belongs to both {owners[b]} and {m.id}")
                owners[b] = m.id
        missing = set(self._bs_index) - set(owners)
        if missing:
            raise ValueError(f"BSs without a MEC server: {sorted(missing)}")
        for v in self.vehicles:
            x, y = v.position_m
            if not (0 <= x <= self.road.length_m and 0 <= y <= self.road.width_m):
                raise ValueError(f"vehicle {v.id} lies outside the road")
            if not coverage_set(self, v):
                raise ValueError(f"vehicle {v.id} is not covered by any BS")

    def bs(self, bs_id: str) -> BaseStation:
        return self._bs_index[bs_id]

    def vehicle(self, av_id: int) -> Vehicle:
        return self._av_index[av_id]

    def mec(self, mec_id: str) -> MecServer:
        for m in self.mec_servers:
            if m.id == mec_id:
                return m
        raise KeyError(mec_id)

    def mec_of_bs(self, bs_id: str) -> MecServer:
        for m in self.mec_servers:
            if bs_id in m.bs_ids:
                return m
        raise KeyError(bs_id)

    def to_dict(self) -> dict:
        return {
            "road": _road_dict(self.road),
            "vehicles": [_vehicle_dict(v) for v in self.vehicles],
            "base_stations": [bs_to_dict(b) for b in self.base_stations],
            "mec_servers": [mec_to_dict(m) for m in self.mec_servers],
            "noise_dbm": self.noise_dbm,
            "seed": self.seed,
        }

    def to_json(self, indent: int | None = 1) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            road=RoadGeometry(**d["road"]),
            vehicles=[_vehicle_from_dict(v) for v in d["vehicles"]],
            base_stations=[bs_from_dict(b) for b in d["base_stations"]],
            mec_servers=[mec_from_dict(m) for m in d["mec_servers"]],
            noise_dbm=float(d["noise_dbm"]),
            seed=int(d["seed"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def _road_dict(r: RoadGeometry) -> dict:
    return {"length_m": r.length_m, "lanes": r.lanes, "lane_width_m": r.lane_width_m}


def bs_to_dict(b: BaseStation) -> dict:
    return {
        "id": b.id,
        "kind": b.kind.value,
        "position_m": list(b.position_m),
        "tx_power_dbm": b.tx_power_dbm,
        "range_m": b.range_m,
        "pathloss_a_db": b.pathloss_a_db,
        "pathloss_b_db": b.pathloss_b_db,
        "mac_efficiency": b.mac_efficiency,
        "reuse_radius_m": b.reuse_radius_m,
    }


def bs_from_dict(d: dict) -> BaseStation:
    d = dict(d)
    d["position_m"] = tuple(d["position_m"])
    return BaseStation(**d)


def mec_to_dict(m: MecServer) -> dict:
    return {
        "id": m.id,
        "compute_capacity": m.compute_capacity,
        "storage_capacity": m.storage_capacity,
        "bandwidth_hz": m.bandwidth_hz,
        "bs_ids": list(m.bs_ids),
        "backhaul_delay_s": m.backhaul_delay_s,
    }


def mec_from_dict(d: dict) -> MecServer:
    return MecServer(**d)


def app_to_dict(a: ApplicationProfile) -> dict:
    return {
        "kind": a.kind.value,
        "arrival_rate_pps": a.arrival_rate_pps,
        "packet_size_bits": a.packet_size_bits,
        "delay_bound_s": a.delay_bound_s,
        "violation_prob": a.violation_prob,
        "rate_threshold_bps": a.rate_threshold_bps,
    }


def _vehicle_dict(v: Vehicle) -> dict:
    return {
        "id": v.id,
        "position_m": list(v.position_m),
        "lane": v.lane,
        "app": app_to_dict(v.app),
        "compute_demand": v.compute_demand,
        "storage_demand": v.storage_demand,
        "workload_cycles": v.workload_cycles,
        "response_threshold_s": v.response_threshold_s,
        "latency_threshold_s": v.latency_threshold_s,
    }


def _vehicle_from_dict(d: dict) -> Vehicle:
    d = dict(d)
    d["position_m"] = tuple(d["position_m"])
    d["app"] = ApplicationProfile(**d["app"])
    return Vehicle(**d)


def distance_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def coverage_set(s: Scenario, v: Vehicle) -> set[str]:
    """Ids of the BSs whose range disk contains the vehicle (boundary inclusive)."""
    return {b.id for b in s.base_stations if distance_m(b.position_m, v.position_m) <= b.range_m}


def _lane_positions(rng: np.random.Generator, n: int, length: float, spacing: float, lane: int) -> np.ndarray:
    # Uniform over {x sorted in [0, L] : gaps >= spacing} via the shift map
    # x_(i) = u_(i) + i*spacing with u_(i) sorted uniform on [0, L - (n-1)*spacing].
    if n == 0:
        return np.empty(0)
    slack = length - (n - 1) * spacing
    if slack < 0:
        raise GenerationError(
            f"lane {lane}: {n} AVs with {spacing} m minimum spacing do not fit on {length} m"
        )
    u = np.sort(rng.uniform(0.0, slack, size=n))
    return u + spacing * np.arange(n)


def generate_case_study(density_av_per_m: float, seed: int, config: ScenarioConfig) -> Scenario:
    """Draw one snapshot of the case-study road.

    AV count is ``round(density * length)``, split as evenly as possible over
    lanes (leftover AVs go to randomly drawn lanes). Each AV is delay-sensitive
    with probability ``config.qos.delay_sensitive_prob``. The result is a pure
    function of ``(density, seed, config)``.
    """
    lo, hi = DENSITY_RANGE
    if not lo - 1e-12 <= density_av_per_m <= hi + 1e-12:
        raise ValueError(f"density {density_av_per_m} AV/m outside [{lo}, {hi}]")
    road = config.road
    rng = np.random.default_rng(seed & 0xFFFF_FFFF_FFFF_FFFF)
    n = int(round(density_av_per_m * road.length_m))

    per_lane = np.full(road.lanes, n // road.lanes)
    extra = n - per_lane.sum()
    if extra:
        per_lane[rng.choice(road.lanes, size=extra, replace=False)] += 1

    qos = config.qos
    dem = config.demands
    ds_app = qos.delay_sensitive
    dt_app = qos.delay_tolerant
    vehicles = []
    for lane in range(road.lanes):
        xs = _lane_positions(rng, int(per_lane[lane]), road.length_m, config.min_spacing_m, lane)
        sensitive = rng.random(xs.size) < qos.delay_sensitive_prob
        for x, ds in zip(xs, sensitive):
            x = float(x)
            dwell = (road.length_m - x) / dem.nominal_speed_mps
            d = dem.delay_sensitive if ds else dem.delay_tolerant
            vehicles.append(
                Vehicle(
                    id=len(vehicles),
                    position_m=(x, road.lane_center(lane)),
                    lane=lane,
                    app=ds_app if ds else dt_app,
                    compute_demand=d.compute_demand,
                    storage_demand=d.storage_demand,
                    workload_cycles=d.workload_cycles,
                    response_threshold_s=dwell,
                    latency_threshold_s=min(dem.latency_threshold_s, dwell) if ds else None,
                )
            )
    return Scenario(
        road=road,
        vehicles=vehicles,
        base_stations=config.base_stations,
        mec_servers=config.mec_servers,
        noise_dbm=config.noise_dbm,
        seed=int(seed),
    )
