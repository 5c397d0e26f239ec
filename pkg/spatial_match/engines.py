"""
Simulation engines for the static, semi-dynamic, fully dynamic and capacity models.

Every engine runs ``cfg.replications`` independent replications, each on its
own random stream, and merges them into one CostReport. Replications can be
spread over worker processes with ``threads``; the report does not depend on
it.
"""

import logging
import math
import time
from collections import deque
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .accumulate import CostAccumulator, ReplicationResult, build_report
from .errors import CapacityExceededError, ConfigError, DomainError, InvariantViolationError, SupplyExhaustedError
from .geometry import Hierarchy, Point, distance_fn, ell0_for_horizon
from .models import CostReport, GammaSchedule, InitKind, ModelKind, Norm, PolicyKind, SimConfig
from .observability import InvariantViolationEvent, ObservabilityHook, RunEndEvent, RunStartEvent
from .parallel import run_jobs
from .policies import (
    BoundaryMonitor,
    density_slack_scale,
    SupplyTree,
    fully_dynamic_ell0,
    gamma_schedule_fully_dynamic,
    gamma_schedule_zero,
    greedy_match,
    hg_insert_supply,
    hg_match,
)
from .rng import even_grid, point_stream, replication_rng, replication_streams, uniform_points
from .static_match import CDIST_METRICS, match_exact_flow, match_line_excess
from .trace import SimulationTrace

logger = logging.getLogger("spatial_match")

STATIONARITY_Z_LIMIT = 3.0
NN_BATCH = 256


class Fixtures:
    """
    Injected point sequences that replace random sampling, for hand traces.

    Every replication sees the same fixtures.

    Attributes:
        initial_supply: Supply present at period 1 (static: the N+M supply points)
        demand: One demand point per period (static: the N demand points)
        supply_arrivals: One arriving supply point per period (fully dynamic)
            or per returning busy unit (capacity)
    """

    def __init__(
        self,
        initial_supply: Optional[Sequence[Point]] = None,
        demand: Optional[Sequence[Point]] = None,
        supply_arrivals: Optional[Sequence[Point]] = None
    ):
        self.initial_supply = None if initial_supply is None else [tuple(p) for p in initial_supply]
        self.demand = None if demand is None else [tuple(p) for p in demand]
        self.supply_arrivals = None if supply_arrivals is None else [tuple(p) for p in supply_arrivals]


def _fixture(points: Optional[List[Point]], expected: Optional[int], name: str, d: int) -> Optional[List[Point]]:
    if points is None:
        return None
    if expected is not None and len(points) != expected:
        raise ConfigError(f"fixture {name} has {len(points)} points, expected {expected}", field=name)
    for point in points:
        if len(point) != d:
            raise ConfigError(f"fixture {name} holds a point of dimension {len(point)}, expected {d}", field=name)
    return points


def default_warmup(m: int, horizon: int, transient: Optional[int] = None) -> int:
    """
    Periods excluded from steady-state statistics when none are configured.

    The larger of the observed transient and ceil(m (3 ln m + 7)), never more
    than half the horizon.
    """
    base = math.ceil(m * (3.0 * math.log(m) + 7.0))
    return min(max(base, transient or 0), horizon // 2)


def resolve_schedule(cfg: SimConfig) -> Tuple[int, Optional[GammaSchedule]]:
    """
    Hierarchy height and threshold schedule for a configuration.

    Returns:
        ``(ell0, schedule)``; the schedule is None for the static model and
        for the greedy policy in the fully dynamic and capacity models

    Raises:
        ScheduleError: If the fully dynamic schedule is invalid for (d, m)
    """
    if cfg.model == ModelKind.STATIC:
        ell0 = cfg.ell0_override if cfg.ell0_override is not None else ell0_for_horizon(cfg.d, cfg.N)
        return ell0, None
    if cfg.model == ModelKind.SEMI_DYNAMIC:
        ell0 = cfg.ell0_override if cfg.ell0_override is not None else ell0_for_horizon(cfg.d, cfg.N)
        return ell0, gamma_schedule_zero(ell0, cfg.d)
    ell0 = cfg.ell0_override if cfg.ell0_override is not None else fully_dynamic_ell0(cfg.d, cfg.m)
    if cfg.policy == PolicyKind.GREEDY:
        return ell0, None
    scale = density_slack_scale(cfg.d, cfg.m, ell0) if cfg.balanced_slack else 1.0
    return ell0, gamma_schedule_fully_dynamic(cfg.d, cfg.m, ell0=ell0, beta=cfg.beta_override, slack_scale=scale)


def _matcher(cfg: SimConfig, schedule: Optional[GammaSchedule]) -> Callable:
    if cfg.policy == PolicyKind.GREEDY or schedule is None:
        return greedy_match
    choice = cfg.leaf_choice
    return lambda state, point: hg_match(state, schedule, point, choice)


def _run_id(cfg: SimConfig) -> str:
    return f"{cfg.model.value}-{cfg.seed}"


def check_config(cfg: SimConfig) -> None:
    """
    Raise the errors a run of ``cfg`` would hit, before any replication starts.

    Raises:
        CapacityExceededError: If a static run with d >= 2 exceeds ``cfg.exact_cap``
        ScheduleError: If the threshold schedule is invalid for (d, m)
    """
    if cfg.model == ModelKind.STATIC and cfg.d >= 2 and cfg.N > cfg.exact_cap:
        raise CapacityExceededError(
            f"N={cfg.N} exceeds the exact solver cap {cfg.exact_cap} for d={cfg.d}",
            limit=cfg.exact_cap,
            requested=cfg.N,
        )
    resolve_schedule(cfg)


def merge_replications(cfg: SimConfig, results: Sequence[ReplicationResult]) -> CostReport:
    """Merge replication results of one configuration into its CostReport."""
    ell0, schedule = resolve_schedule(cfg)
    supply_cost = cfg.m / cfg.n if cfg.model == ModelKind.CAPACITY else None
    gammas = None if schedule is None or cfg.model == ModelKind.STATIC else list(schedule.gammas)
    return build_report(cfg, results, ell0, gammas=gammas, supply_cost=supply_cost)


def _drive(
    cfg: SimConfig,
    replication: Callable,
    hook: Optional[ObservabilityHook],
    threads: int,
    fixtures: Optional[Fixtures]
) -> CostReport:
    run_id = _run_id(cfg)
    if hook is not None:
        hook.on_run_start(RunStartEvent(run_id, cfg.model.value, cfg.d, cfg.N, cfg.replications, cfg.seed))
    started = time.perf_counter()
    # hooks stay in the parent process
    worker_hook = hook if threads <= 1 else None
    job = partial(replication, cfg, fixtures or Fixtures(), worker_hook, run_id)
    results = run_jobs(job, range(cfg.replications), threads)
    report = merge_replications(cfg, results)
    elapsed = time.perf_counter() - started
    logger.debug("run %s merged %d replications in %.3fs", run_id, len(results), elapsed)
    if hook is not None:
        hook.on_run_end(RunEndEvent(
            run_id,
            cfg.model.value,
            elapsed,
            periods=cfg.N * cfg.replications,
            matched=report.matched,
            mean_cost=report.mean_cost,
            stderr=report.stderr,
            stockouts=report.stockouts,
            invariant_violations=report.invariant_violations,
        ))
    return report


def _report_violation(hook, run_id, strict, kind, period, observed, bound) -> None:
    if hook is not None:
        hook.on_invariant_violation(InvariantViolationEvent(run_id, kind, period, -1, 0, observed, bound))
    if strict:
        raise InvariantViolationError(f"{kind} violated at period {period}: {observed} vs {bound}", kind=kind, period=period)


# static


def _static_replication(cfg: SimConfig, fixtures: Fixtures, hook, run_id: str, rep: int) -> ReplicationResult:
    supply_rng, demand_rng = replication_streams(cfg.seed, rep, 2)
    supply = _fixture(fixtures.initial_supply, cfg.N + cfg.M, "initial_supply", cfg.d)
    demand = _fixture(fixtures.demand, cfg.N, "demand", cfg.d)
    if supply is None:
        supply = uniform_points(supply_rng, cfg.d, cfg.N + cfg.M)
    if demand is None:
        demand = uniform_points(demand_rng, cfg.d, cfg.N)

    if cfg.d == 1:
        result = match_line_excess([p[0] for p in supply], [p[0] for p in demand])
    else:
        result = match_exact_flow(supply, demand, cfg.norm, cap=cfg.exact_cap, certify=cfg.debug)

    ell0, _ = resolve_schedule(cfg)
    hierarchy = Hierarchy(cfg.d, ell0)
    dist = distance_fn(cfg.norm)
    acc = CostAccumulator(ell0)
    for i, j in result.pairs:
        level = hierarchy.shared_level(hierarchy.leaf_key(demand[i]), hierarchy.leaf_key(supply[j]))
        acc.add_match(i + 1, level, dist(demand[i], supply[j]))
    return acc.summarize(0, cfg.N, keep_samples=cfg.keep_samples)


def run_static(
    cfg: SimConfig,
    hook: Optional[ObservabilityHook] = None,
    threads: int = 1,
    fixtures: Optional[Fixtures] = None
) -> CostReport:
    """
    Optimal static matching of N demand points into N+M supply points.

    d=1 uses the banded line DP, d>=2 the exact assignment solver. Each pair
    is attributed to the lowest hierarchy level its endpoints share, with
    ell0 the largest integer such that 2^(d ell0) <= N.

    Raises:
        ConfigError: If the model is not static
        CapacityExceededError: If N exceeds ``cfg.exact_cap`` for d >= 2
    """
    if cfg.model != ModelKind.STATIC:
        raise ConfigError(f"run_static needs model static, got {cfg.model.value}", field="model")
    check_config(cfg)
    return _drive(cfg, _static_replication, hook, threads, fixtures)


# semi-dynamic


def _semi_dynamic_replication(cfg: SimConfig, fixtures: Fixtures, hook, run_id: str, rep: int) -> ReplicationResult:
    supply_rng, demand_rng = replication_streams(cfg.seed, rep, 2)
    ell0, schedule = resolve_schedule(cfg)
    hierarchy = Hierarchy(cfg.d, ell0)
    initial = _fixture(fixtures.initial_supply, cfg.N + cfg.M, "initial_supply", cfg.d)
    if initial is None:
        if cfg.init == InitKind.EVEN_GRID:
            initial = even_grid(cfg.d, cfg.N + cfg.M)
        else:
            initial = uniform_points(supply_rng, cfg.d, cfg.N + cfg.M)
    demand = _fixture(fixtures.demand, cfg.N, "demand", cfg.d)
    stream = iter(demand) if demand is not None else point_stream(demand_rng, cfg.d, cfg.N)

    tree = SupplyTree(hierarchy, initial, cfg.norm)
    initial_counts = np.array(tree.counts[0], dtype=np.int64) if cfg.record_trace else None
    match = _matcher(cfg, schedule)
    acc = CostAccumulator(ell0)
    demand_leaves: List[int] = []
    matched_leaves: List[int] = []
    for period, point in enumerate(stream, 1):
        decision = match(tree, point)
        acc.add_match(period, decision.level, decision.distance)
        if cfg.record_trace:
            demand_leaves.append(decision.demand_key)
            matched_leaves.append(decision.supply_key)

    if cfg.debug:
        tree.check_consistency()
    trace = None
    if cfg.record_trace:
        trace = SimulationTrace(
            cfg.d, ell0, schedule, initial_counts,
            np.array(demand_leaves, dtype=np.int64),
            np.array(matched_leaves, dtype=np.int64),
            excess=cfg.M,
        )
    warmup = cfg.warmup or 0
    return acc.summarize(warmup, cfg.N, keep_samples=cfg.keep_samples, trace=trace)


def run_semi_dynamic(
    cfg: SimConfig,
    hook: Optional[ObservabilityHook] = None,
    threads: int = 1,
    fixtures: Optional[Fixtures] = None
) -> CostReport:
    """
    Sequential matching of N arriving demand units against N+M initial supply units.

    Hierarchical Greedy runs with the all-zero schedule on a hierarchy with
    ell0 the largest integer such that 2^(d ell0) <= N.

    Example:
        ```python
        cfg = SimConfig(model="semi_dynamic", d=1, N=4096, M=0, policy="hg", seed=7)
        report = run_semi_dynamic(cfg)
        print(report.mean_cost)
        ```
    """
    if cfg.model != ModelKind.SEMI_DYNAMIC:
        raise ConfigError(f"run_semi_dynamic needs model semi_dynamic, got {cfg.model.value}", field="model")
    check_config(cfg)
    return _drive(cfg, _semi_dynamic_replication, hook, threads, fixtures)


# fully dynamic


def _initial_supply(cfg: SimConfig, fixtures: Fixtures, rng: np.random.Generator) -> List[Point]:
    initial = _fixture(fixtures.initial_supply, cfg.m, "initial_supply", cfg.d)
    if initial is not None:
        return initial
    if cfg.init == InitKind.EVEN_GRID:
        return even_grid(cfg.d, cfg.m)
    return uniform_points(rng, cfg.d, cfg.m)


def _fully_dynamic_replication(cfg: SimConfig, fixtures: Fixtures, hook, run_id: str, rep: int) -> ReplicationResult:
    init_rng, demand_rng, supply_rng = replication_streams(cfg.seed, rep, 3)
    ell0, schedule = resolve_schedule(cfg)
    hierarchy = Hierarchy(cfg.d, ell0)
    tree = SupplyTree(hierarchy, _initial_supply(cfg, fixtures, init_rng), cfg.norm)
    demand = _fixture(fixtures.demand, cfg.N, "demand", cfg.d)
    arrivals = _fixture(fixtures.supply_arrivals, cfg.N, "supply_arrivals", cfg.d)
    demand_stream = iter(demand) if demand is not None else point_stream(demand_rng, cfg.d, cfg.N)
    supply_stream = iter(arrivals) if arrivals is not None else point_stream(supply_rng, cfg.d, cfg.N)

    monitor = None
    if schedule is not None:
        monitor = BoundaryMonitor(tree, schedule, hook, run_id, strict=cfg.strict, check=cfg.debug)
    initial_counts = np.array(tree.counts[0], dtype=np.int64) if cfg.record_trace else None
    match = _matcher(cfg, schedule)
    acc = CostAccumulator(ell0)
    leaves: Tuple[List[int], List[int], List[int]] = ([], [], [])
    violations = 0
    touched: Tuple[int, ...] = ()
    for period in range(1, cfg.N + 1):
        if monitor is not None and touched:
            monitor.start_period(period, touched)
        if cfg.debug and tree.total != cfg.m:
            violations += 1
            _report_violation(hook, run_id, cfg.strict, "conservation", period, tree.total, cfg.m)
        point = next(demand_stream)
        decision = match(tree, point)
        if monitor is not None:
            monitor.after_match(period, decision)
        acc.add_match(period, decision.level, decision.distance)
        arrived = hg_insert_supply(tree, next(supply_stream))
        touched = (decision.supply_key, arrived)
        if cfg.record_trace:
            leaves[0].append(decision.demand_key)
            leaves[1].append(decision.supply_key)
            leaves[2].append(arrived)
    if monitor is not None:
        monitor.start_period(cfg.N + 1, touched)
        violations += monitor.violations
    if cfg.debug:
        tree.check_consistency()

    transient = monitor.transient if monitor is not None else None
    warmup = cfg.warmup if cfg.warmup is not None else default_warmup(cfg.m, cfg.N, transient)
    trace = None
    if cfg.record_trace:
        trace = SimulationTrace(
            cfg.d, ell0, schedule, initial_counts,
            *(np.array(row, dtype=np.int64) for row in leaves),
        )
    return acc.summarize(
        warmup,
        cfg.N,
        keep_samples=cfg.keep_samples,
        transient=transient,
        violations=violations,
        trace=trace,
        stationarity_z=acc.stationarity_z(cfg.N),
    )


def run_fully_dynamic(
    cfg: SimConfig,
    hook: Optional[ObservabilityHook] = None,
    threads: int = 1,
    fixtures: Optional[Fixtures] = None
) -> CostReport:
    """
    Demand-match-supply periods with m free supply units maintained throughout.

    Each period a demand unit arrives and is matched, the pair leaves and a
    supply unit arrives at a uniform location. Statistics exclude the first
    ``warmup`` periods (see ``default_warmup``).

    Raises:
        ConfigError: If the model is not fully_dynamic
        ScheduleError: If the threshold schedule is invalid for (d, m)
        InvariantViolationError: On a violated invariant with ``strict``
    """
    if cfg.model != ModelKind.FULLY_DYNAMIC:
        raise ConfigError(f"run_fully_dynamic needs model fully_dynamic, got {cfg.model.value}", field="model")
    check_config(cfg)
    return _drive(cfg, _fully_dynamic_replication, hook, threads, fixtures)


# capacity


def _capacity_replication(cfg: SimConfig, fixtures: Fixtures, hook, run_id: str, rep: int) -> ReplicationResult:
    init_rng, demand_rng, supply_rng = replication_streams(cfg.seed, rep, 3)
    ell0, schedule = resolve_schedule(cfg)
    hierarchy = Hierarchy(cfg.d, ell0)
    tree = SupplyTree(hierarchy, _initial_supply(cfg, fixtures, init_rng), cfg.norm)
    demand = _fixture(fixtures.demand, cfg.N, "demand", cfg.d)
    arrivals = _fixture(fixtures.supply_arrivals, None, "supply_arrivals", cfg.d)
    demand_stream = iter(demand) if demand is not None else point_stream(demand_rng, cfg.d, cfg.N)
    returns = iter(arrivals) if arrivals is not None else point_stream(supply_rng, cfg.d, cfg.N + cfg.n)

    monitor = None
    if schedule is not None:
        monitor = BoundaryMonitor(tree, schedule, hook, run_id, strict=cfg.strict, check=cfg.debug)
    match = _matcher(cfg, schedule)
    acc = CostAccumulator(ell0)
    fleet = cfg.n + cfg.m
    # return periods of busy units, in order; the initial n units return at 1..n
    busy = deque(range(1, cfg.n + 1))
    waiting: deque = deque()
    violations = 0
    touched: List[int] = []
    for period in range(1, cfg.N + 1):
        if monitor is not None and touched:
            monitor.start_period(period, touched)
        touched = []
        waiting.append(next(demand_stream))
        while waiting:
            try:
                decision = match(tree, waiting[0])
            except SupplyExhaustedError:
                break
            waiting.popleft()
            if monitor is not None:
                monitor.after_match(period, decision)
            acc.add_match(period, decision.level, decision.distance)
            busy.append(period + cfg.n)
            touched.append(decision.supply_key)
        if waiting:
            acc.add_stockout()
        while busy and busy[0] <= period:
            busy.popleft()
            touched.append(tree.insert(next(returns)))
        if cfg.debug and tree.total + len(busy) != fleet:
            violations += 1
            _report_violation(hook, run_id, cfg.strict, "conservation", period, tree.total + len(busy), fleet)
    if monitor is not None:
        if touched:
            monitor.start_period(cfg.N + 1, touched)
        violations += monitor.violations

    transient = monitor.transient if monitor is not None else None
    warmup = cfg.warmup if cfg.warmup is not None else default_warmup(cfg.m, cfg.N, transient)
    return acc.summarize(
        warmup,
        cfg.N,
        keep_samples=cfg.keep_samples,
        transient=transient,
        violations=violations,
        stationarity_z=acc.stationarity_z(cfg.N),
    )


def run_capacity_sim(
    cfg: SimConfig,
    hook: Optional[ObservabilityHook] = None,
    threads: int = 1,
    fixtures: Optional[Fixtures] = None
) -> CostReport:
    """
    Fully dynamic matching with a fleet of n + m units where matched units stay busy for n periods.

    A matched unit reappears n periods later at a uniform location; the n
    units busy at the start return at periods 1..n. A demand unit that finds
    no eligible free supply waits at no cost, is served first in the next
    period, and counts as a stockout. Per-period total cost is m/n plus the
    match distance; the report carries both parts.
    """
    if cfg.model != ModelKind.CAPACITY:
        raise ConfigError(f"run_capacity_sim needs model capacity, got {cfg.model.value}", field="model")
    check_config(cfg)
    return _drive(cfg, _capacity_replication, hook, threads, fixtures)


_ENGINES = {
    ModelKind.STATIC: run_static,
    ModelKind.SEMI_DYNAMIC: run_semi_dynamic,
    ModelKind.FULLY_DYNAMIC: run_fully_dynamic,
    ModelKind.CAPACITY: run_capacity_sim,
}


def run_model(
    cfg: SimConfig,
    hook: Optional[ObservabilityHook] = None,
    threads: int = 1,
    fixtures: Optional[Fixtures] = None
) -> CostReport:
    """Run the engine selected by ``cfg.model``."""
    return _ENGINES[cfg.model](cfg, hook=hook, threads=threads, fixtures=fixtures)


_REPLICATIONS = {
    ModelKind.STATIC: _static_replication,
    ModelKind.SEMI_DYNAMIC: _semi_dynamic_replication,
    ModelKind.FULLY_DYNAMIC: _fully_dynamic_replication,
    ModelKind.CAPACITY: _capacity_replication,
}


def replicate(cfg: SimConfig, rep: int, fixtures: Optional[Fixtures] = None) -> ReplicationResult:
    """
    Run replication ``rep`` of ``cfg`` alone.

    Gives the same result as the matching replication inside a full run, so
    callers can spread (configuration, replication) pairs over workers and
    merge them with ``merge_replications``.
    """
    return _REPLICATIONS[cfg.model](cfg, fixtures or Fixtures(), None, _run_id(cfg), rep)


def stationarity_check(report: CostReport, limit: float = STATIONARITY_Z_LIMIT) -> bool:
    """Whether the second-half and last-quarter means agree within ``limit`` standard errors."""
    return report.stationarity_z is None or report.stationarity_z < limit


# nearest-neighbour baseline


def nn_distance_stats(
    d: int,
    m: int,
    samples: int,
    seed: int,
    norm: Norm = Norm.EUCLIDEAN
) -> Tuple[float, float]:
    """
    Monte Carlo mean and standard error of the distance from a uniform
    demand point to the nearest of m uniform supply points.

    Raises:
        DomainError: If m < 1 or samples < 1
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    if samples < 1:
        raise DomainError(f"samples must be >= 1, got {samples}")
    rng = replication_rng(seed, 0)
    metric = CDIST_METRICS[Norm(norm)]
    values = np.empty(samples)
    done = 0
    while done < samples:
        batch = min(NN_BATCH, samples - done)
        demand = rng.random((batch, d))
        for i in range(batch):
            supply = rng.random((m, d))
            values[done + i] = cdist(demand[i:i + 1], supply, metric=metric).min()
        done += batch
    stderr = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return float(values.mean()), stderr


def estimate_nn_distance(d: int, m: int, samples: int, seed: int, norm: Norm = Norm.EUCLIDEAN) -> float:
    """Monte Carlo estimate of the expected nearest-neighbour distance with m uniform supply points."""
    return nn_distance_stats(d, m, samples, seed, norm)[0]
