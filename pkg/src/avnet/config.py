"""Experiment configuration: topology, QoS table, demands and solver knobs.

The defaults reproduce the case-study road: two eNBs and six Wi-Fi APs on
one side of a 1 km, four-lane one-way road, all served by one MEC server
with 25 MHz of aggregate downlink bandwidth.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .scenario import (
    DENSITY_RANGE,
    AppKind,
    ApplicationProfile,
    BaseStation,
    BsKind,
    MecServer,
    RoadGeometry,
    app_to_dict,
    bs_from_dict,
    bs_to_dict,
    mec_from_dict,
    mec_to_dict,
)

CASE_STUDY_DENSITIES = (0.12, 0.14, 0.16, 0.18, 0.20, 0.22, 0.24)
CONFIG_ENV_VAR = "AVNET_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class QosTable:
    delay_sensitive: ApplicationProfile = ApplicationProfile(
        AppKind.DELAY_SENSITIVE, arrival_rate_pps=4.0, packet_size_bits=1048.0,
        delay_bound_s=0.1, violation_prob=1e-3,
    )
    delay_tolerant: ApplicationProfile = ApplicationProfile(
        AppKind.DELAY_TOLERANT, arrival_rate_pps=20.0, packet_size_bits=9000.0,
    )
    delay_sensitive_prob: float = 0.8


@dataclass(frozen=True)
class TaskDefaults:
    compute_demand: float
    workload_cycles: float
    storage_demand: float


@dataclass(frozen=True)
class DemandTable:
    delay_sensitive: TaskDefaults = TaskDefaults(1e8, 2e6, 1e7)
    delay_tolerant: TaskDefaults = TaskDefaults(0.0, 0.0, 5e7)
    nominal_speed_mps: float = 20.0
    latency_threshold_s: float = 0.1


@dataclass(frozen=True)
class SolverSettings:
    grid_step: float = 0.02
    max_iters: int = 10
    kappa: float = 0.5
    w_compute: float = 1.0
    w_storage: float = 1.0
    interference_factor: float = 2.0
    d_min_m: float = 1.0
    cloud_delay_s: float = 0.05
    backhaul_multiplier: float = 1.0
    # None -> equal split over the MEC server's slices
    baseline_beta: tuple[float, ...] | None = None


def _case_study_bss() -> tuple[BaseStation, ...]:
    y = -10.0
    enb = dict(kind=BsKind.ENB, tx_power_dbm=40.0, range_m=600.0, pathloss_a_db=-30.0,
               pathloss_b_db=-35.0, mac_efficiency=1.0, reuse_radius_m=150.0)
    ap = dict(kind=BsKind.WIFI_AP, tx_power_dbm=28.45, range_m=180.0, pathloss_a_db=-40.0,
              pathloss_b_db=-35.0, mac_efficiency=0.8)
    bss = [BaseStation(id="S1", position_m=(250.0, y), **enb),
           BaseStation(id="S2", position_m=(750.0, y), **enb)]
    for i, x in enumerate((85.0, 250.0, 415.0, 585.0, 750.0, 915.0), start=1):
        bss.append(BaseStation(id=f"AP{i}", position_m=(x, y), **ap))
    return tuple(bss)


def _case_study_mecs() -> tuple[MecServer, ...]:
    return (MecServer(id="M1", compute_capacity=1.2e10, storage_capacity=4e9, bandwidth_hz=25e6,
                      bs_ids=("S1", "S2", "AP1", "AP2", "AP3", "AP4", "AP5", "AP6"),
                      backhaul_delay_s=0.01),)


@dataclass(frozen=True)
class ScenarioConfig:
    road: RoadGeometry = RoadGeometry()
    min_spacing_m: float = 5.0
    base_stations: tuple[BaseStation, ...] = field(default_factory=_case_study_bss)
    mec_servers: tuple[MecServer, ...] = field(default_factory=_case_study_mecs)
    noise_dbm: float = -104.0
    qos: QosTable = QosTable()
    demands: DemandTable = DemandTable()
    solver: SolverSettings = SolverSettings()
    densities: tuple[float, ...] = CASE_STUDY_DENSITIES
    replications: int = 20
    base_seed: int = 2019

    def __post_init__(self):
        object.__setattr__(self, "base_stations", tuple(self.base_stations))
        object.__setattr__(self, "mec_servers", tuple(self.mec_servers))
        object.__setattr__(self, "densities", tuple(float(d) for d in self.densities))
        self.validate()

    def validate(self):
        ids = [b.id for b in self.base_stations]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate base station id")
        owned: list[str] = []
        for m in self.mec_servers:
            for b in m.bs_ids:
                if b not in ids:
                    raise ConfigError(f"MEC server {m.id} references unknown BS {b!r}")
            owned.extend(m.bs_ids)
        if sorted(owned) != sorted(ids):
            raise ConfigError("every BS must belong to exactly one MEC server")
        if not self.mec_servers:
            raise ConfigError("at least one MEC server is required")
        lo, hi = DENSITY_RANGE
        for d in self.densities:
            if not lo - 1e-12 <= d <= hi + 1e-12:
                raise ConfigError(f"density {d} outside [{lo}, {hi}]")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError("replications must be a positive integer")
        if not self.min_spacing_m > 0:
            raise ConfigError("min_spacing_m must be positive")
        if not 0 <= self.qos.delay_sensitive_prob <= 1:
            raise ConfigError("delay_sensitive_prob must be a probability")
        s = self.solver
        if not 0 < s.grid_step <= 0.5:
            raise ConfigError("grid_step must lie in (0, 0.5]")
        if s.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if min(s.kappa, s.w_compute, s.w_storage) < 0:
            raise ConfigError("kappa and weights must be nonnegative")
        if self.demands.nominal_speed_mps <= 0:
            raise ConfigError("nominal_speed_mps must be positive")

    def with_solver(self, **kw) -> "ScenarioConfig":
        return replace(self, solver=replace(self.solver, **kw))

    def to_dict(self) -> dict:
        s = self.solver
        return {
            "road": {"length_m": self.road.length_m, "lanes": self.road.lanes,
                     "lane_width_m": self.road.lane_width_m},
            "min_spacing_m": self.min_spacing_m,
            "base_stations": [bs_to_dict(b) for b in self.base_stations],
            "mec_servers": [mec_to_dict(m) for m in self.mec_servers],
            "noise_dbm": self.noise_dbm,
            "qos": {
                "delay_sensitive": app_to_dict(self.qos.delay_sensitive),
                "delay_tolerant": app_to_dict(self.qos.delay_tolerant),
                "delay_sensitive_prob": self.qos.delay_sensitive_prob,
            },
            "demands": {
                "delay_sensitive": vars(self.demands.delay_sensitive).copy(),
                "delay_tolerant": vars(self.demands.delay_tolerant).copy(),
                "nominal_speed_mps": self.demands.nominal_speed_mps,
                "latency_threshold_s": self.demands.latency_threshold_s,
            },
            "solver": {
                "grid_step": s.grid_step, "max_iters": s.max_iters, "kappa": s.kappa,
                "w_compute": s.w_compute, "w_storage": s.w_storage,
                "interference_factor": s.interference_factor, "d_min_m": s.d_min_m,
                "cloud_delay_s": s.cloud_delay_s, "backhaul_multiplier": s.backhaul_multiplier,
                "baseline_beta": None if s.baseline_beta is None else list(s.baseline_beta),
            },
            "densities": list(self.densities),
            "replications": self.replications,
            "base_seed": self.base_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        """Build a config; absent sections fall back to the case-study defaults."""
        base = cls()
        try:
            kw = {}
            if "road" in d:
                kw["road"] = RoadGeometry(**d["road"])
            if "base_stations" in d:
                kw["base_stations"] = tuple(bs_from_dict(b) for b in d["base_stations"])
            if "mec_servers" in d:
                kw["mec_servers"] = tuple(mec_from_dict(m) for m in d["mec_servers"])
            for key in ("min_spacing_m", "noise_dbm", "replications", "base_seed"):
                if key in d:
                    kw[key] = d[key]
            if "densities" in d:
                kw["densities"] = tuple(d["densities"])
            if "qos" in d:
                q = d["qos"]
                kw["qos"] = QosTable(
                    delay_sensitive=_profile(q.get("delay_sensitive"), base.qos.delay_sensitive),
                    delay_tolerant=_profile(q.get("delay_tolerant"), base.qos.delay_tolerant),
                    delay_sensitive_prob=q.get("delay_sensitive_prob", base.qos.delay_sensitive_prob),
                )
            if "demands" in d:
                dm = d["demands"]
                kw["demands"] = DemandTable(
                    delay_sensitive=_task(dm.get("delay_sensitive"), base.demands.delay_sensitive),
                    delay_tolerant=_task(dm.get("delay_tolerant"), base.demands.delay_tolerant),
                    nominal_speed_mps=dm.get("nominal_speed_mps", base.demands.nominal_speed_mps),
                    latency_threshold_s=dm.get("latency_threshold_s", base.demands.latency_threshold_s),
                )
            if "solver" in d:
                sv = dict(d["solver"])
                if sv.get("baseline_beta") is not None:
                    sv["baseline_beta"] = tuple(sv["baseline_beta"])
                kw["solver"] = replace(base.solver, **sv)
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)


def _profile(d: dict | None, default: ApplicationProfile) -> ApplicationProfile:
    if d is None:
        return default
    merged = app_to_dict(default)
    merged.update(d)
    return ApplicationProfile(**merged)


def _task(d: dict | None, default: TaskDefaults) -> TaskDefaults:
    if d is None:
        return default
    merged = vars(default).copy()
    merged.update(d)
    return TaskDefaults(**merged)


def load_config(path: str | os.PathLike | None = None) -> ScenarioConfig:
    """Read a JSON config; ``None`` consults ``$AVNET_CONFIG`` and then the built-in defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
        if not path:
            return ScenarioConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return ScenarioConfig.from_json(p.read_text())
