"""Bandwidth slicing, user association and MEC placement for autonomous-vehicle road networks."""
from .config import ConfigError, ScenarioConfig, SolverSettings, load_config
from .harness import SweepRecord, plotdata, run_sweep
from .mec import (
    CLOUD,
    JointResult,
    MecAssignment,
    MecWeights,
    TaskDemand,
    build_tasks,
    joint_solve,
    solve_assignment,
)
from .qos import rate_for_delay, required_rate, transmission_delay
from .radio import (
    ReusePattern,
    build_reuse_pattern,
    link_quality,
    pathloss_db,
    received_power_dbm,
    reuse_is_legal,
    sinr,
    spectral_efficiency,
)
from .scenario import (
    AppKind,
    ApplicationProfile,
    BaseStation,
    BsKind,
    GenerationError,
    MecServer,
    RoadGeometry,
    Scenario,
    Vehicle,
    coverage_set,
    generate_case_study,
)
from .slicing import SlicingSolution, evaluate, optimal_fractions, solve_max_sinr, solve_num

__version__ = "0.1.0"
