"""
spatial_match
=============

Simulation library for spatial matching of supply and demand in the unit
cube: exact static matching oracles, the Hierarchical Greedy policy and its
threshold schedules, engines for the static, semi-dynamic, fully dynamic and
capacity models, and an experiment harness for cost-scaling laws.
"""

__version__ = "0.1.0"

from .models import (
    Norm, ModelKind, PolicyKind, InitKind, LeafChoice,
    HypercubeId, MatchingResult, GammaSchedule, SimConfig, LevelStats, CostReport,
    ScalePoint, ScalingFit, WalkSpec, WalkOccupancy, TailBoundRow,
    SweepPoint, SweepSpec, CapacityGrid, CapacityPoint, CapacityPlan,
    CheckResult, RunManifest, RunSummary
)
from .errors import (
    SpatialMatchError, ConfigError, DomainError, CapacityExceededError, ScheduleError,
    SupplyExhaustedError, InvariantViolationError, CheckFailedError
)
from .geometry import Hierarchy, build_hierarchy, leaf_of, ancestor_of, distance, ell0_for_horizon
from .static_match import match_line_balanced, match_line_excess, match_exact_flow, brute_force_match
from .policies import (
    MatchDecision, SupplyTree, BoundaryMonitor,
    gamma_schedule_zero, gamma_schedule_fully_dynamic, validate_schedule,
    hg_match, hg_insert_supply, greedy_match
)
from .trace import SimulationTrace
from .engines import (
    Fixtures, run_static, run_semi_dynamic, run_fully_dynamic, run_capacity_sim, run_model,
    estimate_nn_distance, nn_distance_stats, stationarity_check, default_warmup
)
from .experiments import (
    fit_scaling, bootstrap_exponent, sweep, walk_spec, walk_domination_check,
    simulate_reflected_walk, stationary_lower_occupancy, crossover_level,
    tail_bound_diagnostic, capacity_plan, sandwich_ratios
)
from .observability import (
    RunStartEvent, RunEndEvent, InvariantViolationEvent,
    ObservabilityHook, LoggingHook, MetricsCollector, CompositeHook
)

__all__ = [
    # Models
    "Norm",
    "ModelKind",
    "PolicyKind",
    "InitKind",
    "LeafChoice",
    "HypercubeId",
    "MatchingResult",
    "GammaSchedule",
    "SimConfig",
    "LevelStats",
    "CostReport",
    "ScalePoint",
    "ScalingFit",
    "WalkSpec",
    "WalkOccupancy",
    "TailBoundRow",
    "SweepPoint",
    "SweepSpec",
    "CapacityGrid",
    "CapacityPoint",
    "CapacityPlan",
    "CheckResult",
    "RunManifest",
    "RunSummary",
    # Errors
    "SpatialMatchError",
    "ConfigError",
    "DomainError",
    "CapacityExceededError",
    "ScheduleError",
    "SupplyExhaustedError",
    "InvariantViolationError",
    "CheckFailedError",
    # Geometry
    "Hierarchy",
    "build_hierarchy",
    "leaf_of",
    "ancestor_of",
    "distance",
    "ell0_for_horizon",
    # Static matching
    "match_line_balanced",
    "match_line_excess",
    "match_exact_flow",
    "brute_force_match",
    # Policies
    "MatchDecision",
    "SupplyTree",
    "BoundaryMonitor",
    "gamma_schedule_zero",
    "gamma_schedule_fully_dynamic",
    "validate_schedule",
    "hg_match",
    "hg_insert_supply",
    "greedy_match",
    # Engines
    "SimulationTrace",
    "Fixtures",
    "run_static",
    "run_semi_dynamic",
    "run_fully_dynamic",
    "run_capacity_sim",
    "run_model",
    "estimate_nn_distance",
    "nn_distance_stats",
    "stationarity_check",
    "default_warmup",
    # Experiments
    "fit_scaling",
    "bootstrap_exponent",
    "sweep",
    "walk_spec",
    "walk_domination_check",
    "simulate_reflected_walk",
    "stationary_lower_occupancy",
    "crossover_level",
    "tail_bound_diagnostic",
    "capacity_plan",
    "sandwich_ratios",
    # Observability
    "RunStartEvent",
    "RunEndEvent",
    "InvariantViolationEvent",
    "ObservabilityHook",
    "LoggingHook",
    "MetricsCollector",
    "CompositeHook",
]
