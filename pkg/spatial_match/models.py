"""
Core data models for spatial_match.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, PrivateAttr, computed_field, field_validator, model_validator


class Norm(str, Enum):
    """Distance used for match costs."""
    EUCLIDEAN = "euclidean"
    L1 = "l1"
    LINF = "linf"


class ModelKind(str, Enum):
    """Which matching model a simulation runs."""
    STATIC = "static"
    SEMI_DYNAMIC = "semi_dynamic"
    FULLY_DYNAMIC = "fully_dynamic"
    CAPACITY = "capacity"


class PolicyKind(str, Enum):
    """Online matching policy."""
    HIERARCHICAL_GREEDY = "hierarchical_greedy"
    GREEDY = "greedy"


class InitKind(str, Enum):
    """Initial supply placement."""
    UNIFORM_RANDOM = "uniform_random"
    EVEN_GRID = "even_grid"


class LeafChoice(str, Enum):
    """Which supply unit Hierarchical Greedy takes once it has picked a leaf."""
    NEAREST = "nearest"
    LAST_INSERTED = "last_inserted"


POLICY_ALIASES = {"hg": PolicyKind.HIERARCHICAL_GREEDY.value}


class HypercubeId(BaseModel):
    """A cell of the dyadic hierarchy: its level and per-axis indices."""
    level: int = Field(ge=0)
    index: Tuple[int, ...]

    model_config = {
        "frozen": True
    }


class MatchingResult(BaseModel):
    """An exact matching of all demand units to distinct supply units."""
    pairs: List[Tuple[int, int]]
    total_cost: float
    avg_cost: float
    unmatched_supply: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_injective(self) -> "MatchingResult":
        demand = [i for i, _ in self.pairs]
        supply = [j for _, j in self.pairs]
        if len(set(demand)) != len(demand):
            raise ValueError("a demand index is matched twice")
        if len(set(supply)) != len(supply):
            raise ValueError("a supply index is matched twice")
        return self


class GammaSchedule(BaseModel):
    """
    Minimum-supply thresholds gamma_0 ... gamma_ell0 protected by Hierarchical Greedy.

    Derived quantities follow the algorithm's definitions:
    eta_l = gamma_{l+1} * 2^-d, lower boundary floor(gamma_l) and upper
    boundary ceil(eta_l) - 1 for l <= ell0 - 1.
    """
    d: int = Field(ge=1)
    gammas: List[float]
    beta: Optional[float] = None
    slack_scale: float = Field(default=1.0, ge=1.0)

    @field_validator("gammas")
    @classmethod
    def _non_empty(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("gammas must contain at least the root threshold")
        return value

    @property
    def ell0(self) -> int:
        return len(self.gammas) - 1

    @computed_field
    @property
    def etas(self) -> List[float]:
        scale = 2.0 ** -self.d
        return [g * scale for g in self.gammas[1:]]

    @computed_field
    @property
    def lower_bounds(self) -> List[int]:
        return [math.floor(g) for g in self.gammas]

    @computed_field
    @property
    def upper_bounds(self) -> List[int]:
        return [math.ceil(eta) - 1 for eta in self.etas]


class SimConfig(BaseModel):
    """Fully resolved configuration of one engine invocation."""
    model: ModelKind
    d: int = Field(default=1, ge=1)
    N: int = Field(ge=1)
    M: int = Field(default=0, ge=0)
    m: Optional[int] = None
    n: Optional[int] = None
    policy: PolicyKind = PolicyKind.HIERARCHICAL_GREEDY
    init: InitKind = InitKind.UNIFORM_RANDOM
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    replications: int = Field(default=1, ge=1)
    warmup: Optional[int] = Field(default=None, ge=0)
    norm: Norm = Norm.EUCLIDEAN
    beta_override: Optional[float] = Field(default=None, gt=0)
    ell0_override: Optional[int] = Field(default=None, ge=0)
    balanced_slack: bool = False
    leaf_choice: LeafChoice = LeafChoice.NEAREST
    keep_samples: bool = False
    record_trace: bool = False
    debug: bool = False
    strict: bool = False
    exact_cap: int = Field(default=4096, ge=1)

    @field_validator("policy", mode="before")
    @classmethod
    def _policy_alias(cls, value: Any) -> Any:
        if isinstance(value, str):
            return POLICY_ALIASES.get(value, value)
        return value

    @model_validator(mode="after")
    def _check_model_fields(self) -> "SimConfig":
        if self.model in (ModelKind.FULLY_DYNAMIC, ModelKind.CAPACITY):
            if self.m is None:
                raise ValueError(f"m is required for model {self.model.value}")
            if self.m < 2:
                raise ValueError(f"m must be >= 2, got {self.m}")
        if self.model == ModelKind.CAPACITY:
            if self.n is None:
                raise ValueError("n is required for model capacity")
            if self.n < 1:
                raise ValueError(f"n must be >= 1, got {self.n}")
        if self.warmup is not None and self.warmup >= self.N:
            raise ValueError(f"warmup ({self.warmup}) must be < N ({self.N})")
        return self


class LevelStats(BaseModel):
    """Matches and their summed distance at one hierarchy level."""
    level: int
    match_count: int = 0
    total_cost: float = 0.0


class CostReport(BaseModel):
    """Summary of an engine run, merged over replications."""
    model: ModelKind
    d: int
    replications: int
    mean_cost: float
    stderr: Optional[float] = None
    per_level: List[LevelStats] = Field(default_factory=list)
    matched: int = 0
    periods_measured: int = 0
    warmup: int = 0
    ell0: int = 0
    gammas: Optional[List[float]] = None
    transient_estimate: Optional[int] = None
    replication_means: List[float] = Field(default_factory=list)
    stockouts: int = 0
    supply_cost: Optional[float] = None
    total_cost: Optional[float] = None
    invariant_violations: int = 0
    stationarity_z: Optional[float] = None
    raw_samples: Optional[List[float]] = None

    _traces: List[Any] = PrivateAttr(default_factory=list)

    @property
    def traces(self) -> List[Any]:
        """Recorded simulation traces, one per replication, when requested."""
        return self._traces

    @property
    def per_period_cost(self) -> Dict[str, Optional[float]]:
        """Mean match distance and its standard error."""
        return {"mean": self.mean_cost, "stderr": self.stderr}


class ScalePoint(BaseModel):
    """One (scale, mean cost, standard error) observation of a sweep."""
    scale: float
    cost: float
    stderr: Optional[float] = None


class ScalingFit(BaseModel):
    """Log-log regression of cost against a scale parameter."""
    exponent: float
    intercept: float
    stderr: float
    r2: float
    points: List[ScalePoint]
    weighted: bool = True
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None

    @field_validator("r2")
    @classmethod
    def _r2_range(cls, value: float) -> float:
        if abs(value) > 1.0 + 1e-9:
            raise ValueError(f"r2 out of range: {value}")
        return value


class WalkSpec(BaseModel):
    """A lazy doubly reflected random walk at one hierarchy level."""
    level: int = Field(ge=0)
    q: float = Field(gt=0.0, le=1.0)
    lower: int
    upper: int
    start: int

    @model_validator(mode="after")
    def _check_bounds(self) -> "WalkSpec":
        if self.lower > self.upper:
            raise ValueError(f"lower boundary {self.lower} above upper boundary {self.upper}")
        if not self.lower <= self.start <= self.upper:
            raise ValueError(f"start {self.start} outside [{self.lower}, {self.upper}]")
        return self

    @property
    def width(self) -> int:
        """Number of states, upper - lower + 1."""
        return self.upper - self.lower + 1


class WalkOccupancy(BaseModel):
    """Estimated lower-boundary occupancy of a simulated walk."""
    occupancy: float
    stderr: float
    expected: float
    periods: int
    chains: int


class TailBoundRow(BaseModel):
    """Empirical versus analytic excess demand at one level."""
    level: int
    nodes: int
    empirical_excess: float
    envelope: float
    ratio: float
    damped: bool


class SweepPoint(BaseModel):
    """One grid point of a sweep."""
    param: str
    value: int
    report: CostReport


class CapacityPoint(BaseModel):
    """Best fleet slack m* found for one load factor n."""
    n: int
    m_star: int
    m_smoothed: float
    cost: float
    boundary: bool
    costs: List[Tuple[int, float]]
    report: Optional[CostReport] = None


class CapacityPlan(BaseModel):
    """Per-n optimal slack and the fitted exponent of m* in n."""
    d: int
    points: List[CapacityPoint]
    fit: ScalingFit

    @property
    def boundary_flags(self) -> List[int]:
        """Load factors whose optimum sits on the edge of its m grid."""
        return [p.n for p in self.points if p.boundary]


class CheckResult(BaseModel):
    """Outcome of one acceptance check."""
    criterion: str
    passed: bool
    detail: str
    seconds: float = 0.0


class RunManifest(BaseModel):
    """Everything needed to reproduce an output directory."""
    command: str
    config_hash: str
    seed: int
    version: str
    started_at: str
    finished_at: str
    outputs: List[str]
    config: Dict[str, Any]
    sweep: Optional[Dict[str, Any]] = None


class RunSummary(BaseModel):
    """Summary document written as summary.json (versioned schema)."""
    schema_version: Literal["1"] = "1"
    command: Literal["simulate", "sweep"]
    config_hash: str
    mean_cost: Optional[float] = None
    report: Optional[CostReport] = None
    sweep_param: Optional[str] = None
    sweep: Optional[List[SweepPoint]] = None
    fit: Optional[ScalingFit] = None
    capacity: Optional[CapacityPlan] = None


SCALE_PARAMS = ("N", "M", "m", "n")


class CapacityGrid(BaseModel):
    """Per-load-factor m grid and horizon of a capacity sweep."""
    points: int = Field(default=9, ge=3)
    spread: float = Field(default=4.0, gt=1.0)
    horizon_per_m: int = Field(default=200, ge=1)


class SweepSpec(BaseModel):
    """
    The ``sweep:`` section of a config file.

    ``grid`` is a list of values or ``{"powers_of_two": [lo, hi]}``.
    ``ties`` sets other size fields proportional to the swept value,
    e.g. ``{"M": 1.0}`` for M = N or ``{"N": 200}`` for N = 200 m.
    """
    param: Literal["N", "M", "m", "n"]
    grid: List[int] = Field(min_length=1)
    ties: Dict[str, float] = Field(default_factory=dict)
    capacity: CapacityGrid = Field(default_factory=CapacityGrid)

    @field_validator("grid", mode="before")
    @classmethod
    def _expand_grid(cls, value: Any) -> Any:
        if isinstance(value, dict):
            if set(value) != {"powers_of_two"}:
                raise ValueError("grid mapping must be {powers_of_two: [lo, hi]}")
            lo, hi = value["powers_of_two"]
            return [2 ** k for k in range(int(lo), int(hi) + 1)]
        return value

    @field_validator("grid")
    @classmethod
    def _positive_grid(cls, value: List[int]) -> List[int]:
        if any(v < 0 for v in value):
            raise ValueError("grid values must be non-negative")
        return value

    @field_validator("ties")
    @classmethod
    def _known_ties(cls, value: Dict[str, float]) -> Dict[str, float]:
        unknown = set(value) - set(SCALE_PARAMS)
        if unknown:
            raise ValueError(f"cannot tie {sorted(unknown)}; choose from {list(SCALE_PARAMS)}")
        return value
