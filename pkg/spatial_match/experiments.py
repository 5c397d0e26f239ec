"""
Scaling-law estimation, sweeps, capacity planning and trace diagnostics.
"""

import logging
import math
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .engines import check_config, merge_replications, replicate, run_capacity_sim
from .errors import ConfigError, DomainError
from .models import (
    SCALE_PARAMS,
    CapacityPlan,
    CapacityPoint,
    GammaSchedule,
    ModelKind,
    PolicyKind,
    ScalePoint,
    ScalingFit,
    SimConfig,
    SweepPoint,
    TailBoundRow,
    WalkOccupancy,
    WalkSpec,
)
from .parallel import run_jobs
from .rng import derive_seed, replication_rng
from .trace import SimulationTrace

logger = logging.getLogger("spatial_match")

BOOTSTRAP_RESAMPLES = 200
TAIL_CONSTANT = 19
PointLike = Union[ScalePoint, Tuple[float, float], Tuple[float, float, Optional[float]]]


# fitting


def _as_point(point: PointLike) -> ScalePoint:
    if isinstance(point, ScalePoint):
        return point
    scale, cost, *rest = point
    return ScalePoint(scale=scale, cost=cost, stderr=rest[0] if rest else None)


def _regress(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> Tuple[float, float, float, float]:
    total = w.sum()
    x_bar = float((w * x).sum() / total)
    y_bar = float((w * y).sum() / total)
    sxx = float((w * (x - x_bar) ** 2).sum())
    if sxx == 0.0:
        raise DomainError("scales must not all be equal")
    slope = float((w * (x - x_bar) * (y - y_bar)).sum()) / sxx
    intercept = y_bar - slope * x_bar
    residual = y - (intercept + slope * x)
    ss_res = float((w * residual ** 2).sum())
    ss_tot = float((w * (y - y_bar) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(-1.0, 1.0 - ss_res / ss_tot)
    dof = len(x) - 2
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 else 0.0
    return slope, intercept, stderr, r2


def fit_scaling(points: Sequence[PointLike]) -> ScalingFit:
    """
    Fit log(cost) = intercept + exponent * log(scale) by least squares.

    Points are weighted by 1 / (stderr / cost)^2, the variance of log cost,
    when every point has a positive standard error; otherwise the fit is
    unweighted.

    Args:
        points: ``ScalePoint``s or ``(scale, cost[, stderr])`` tuples

    Raises:
        DomainError: With fewer than 3 points or a non-positive scale or cost
    """
    parsed = [_as_point(p) for p in points]
    if len(parsed) < 3:
        raise DomainError(f"need at least 3 points to fit, got {len(parsed)}")
    for p in parsed:
        if p.scale <= 0 or p.cost <= 0:
            raise DomainError(f"scale and cost must be positive, got ({p.scale}, {p.cost})")
    x = np.log([p.scale for p in parsed])
    y = np.log([p.cost for p in parsed])
    weighted = all(p.stderr is not None and p.stderr > 0 for p in parsed)
    if weighted:
        w = np.array([(p.cost / p.stderr) ** 2 for p in parsed])
    else:
        w = np.ones(len(parsed))
    slope, intercept, stderr, r2 = _regress(x, y, w)
    return ScalingFit(
        exponent=slope,
        intercept=intercept,
        stderr=stderr,
        r2=r2,
        points=parsed,
        weighted=weighted,
    )


def bootstrap_exponent(
    scales: Sequence[float],
    replication_means: Sequence[Sequence[float]],
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    confidence: float = 0.95
) -> Tuple[float, float]:
    """
    Percentile confidence interval of the fitted exponent.

    Each resample redraws the replication means of every scale with
    replacement and refits.
    """
    if len(scales) != len(replication_means):
        raise DomainError("one list of replication means is needed per scale")
    rng = replication_rng(seed, 0)
    slopes = []
    for _ in range(resamples):
        points = []
        for scale, means in zip(scales, replication_means):
            sample = rng.choice(np.asarray(means, dtype=float), size=len(means), replace=True)
            stderr = float(sample.std(ddof=1) / math.sqrt(len(sample))) if len(sample) > 1 else None
            points.append(ScalePoint(scale=scale, cost=float(sample.mean()), stderr=stderr))
        slopes.append(fit_scaling(points).exponent)
    tail = (1.0 - confidence) / 2.0
    low, high = np.quantile(slopes, [tail, 1.0 - tail])
    return float(low), float(high)


def fit_sweep(points: Sequence[SweepPoint], bootstrap_seed: Optional[int] = None) -> ScalingFit:
    """
    Fit mean cost against the swept value; attach a bootstrap interval when
    every point has at least two replications.
    """
    fit = fit_scaling([(p.value, p.report.mean_cost, p.report.stderr) for p in points])
    if bootstrap_seed is not None and all(len(p.report.replication_means) >= 2 for p in points):
        low, high = bootstrap_exponent(
            [p.value for p in points],
            [p.report.replication_means for p in points],
            seed=bootstrap_seed,
        )
        fit = fit.model_copy(update={"ci_low": low, "ci_high": high})
    return fit


# sweeps


def point_config(base: SimConfig, param: str, value: int, ties: Optional[Dict[str, float]] = None) -> SimConfig:
    """
    Configuration of one sweep point.

    Tied fields are set to ``round(factor * value)`` and the seed is derived
    from the base seed and the point, so every point has its own streams.

    Raises:
        ConfigError: If the point is not a valid configuration
    """
    if param not in SCALE_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose from {list(SCALE_PARAMS)}", field="param")
    update = {param: value}
    for field, factor in (ties or {}).items():
        update[field] = int(round(factor * value))
    update["seed"] = derive_seed(base.seed, param, value)
    data = base.model_dump()
    data.update(update)
    if data.get("warmup") is not None and data["warmup"] >= data["N"]:
        data["warmup"] = None
    try:
        return SimConfig.model_validate(data)
    except ValueError as exc:
        raise ConfigError(f"sweep point {param}={value}: {exc}", field=param)


def _sweep_job(configs: Sequence[SimConfig], job: Tuple[int, int]):
    index, rep = job
    return replicate(configs[index], rep)


def sweep(
    base: SimConfig,
    param: str,
    grid: Sequence[int],
    ties: Optional[Dict[str, float]] = None,
    threads: int = 1
) -> List[SweepPoint]:
    """
    Run the engine of ``base.model`` at every grid value of ``param``.

    All (point, replication) pairs are spread over the worker pool and merged
    point by point in replication order, so the output does not depend on
    ``threads``.

    Raises:
        ConfigError: If the grid is empty or a point is invalid
    """
    if not grid:
        raise ConfigError("sweep grid is empty", field="grid")
    configs = [point_config(base, param, int(value), ties) for value in grid]
    for cfg in configs:
        check_config(cfg)
    jobs = [(i, rep) for i, cfg in enumerate(configs) for rep in range(cfg.replications)]
    logger.info("sweep over %s: %d points, %d jobs, %d threads", param, len(configs), len(jobs), threads)
    results = run_jobs(partial(_sweep_job, configs), jobs, threads)

    points = []
    offset = 0
    for value, cfg in zip(grid, configs):
        chunk = results[offset:offset + cfg.replications]
        offset += cfg.replications
        points.append(SweepPoint(param=param, value=int(value), report=merge_replications(cfg, chunk)))
    return points


# reflected walks


def walk_spec(schedule: GammaSchedule, level: int, start: Optional[int] = None) -> WalkSpec:
    """
    The reflected walk that lower-bounds a level-``level`` cell's supply count.

    Step probability q = 2^(-(ell0-level) d), boundaries floor(gamma_l) and
    ceil(eta_l) - 1.

    Raises:
        DomainError: If ``level`` is not below ell0 or the boundaries are empty
    """
    if not 0 <= level < schedule.ell0:
        raise DomainError(f"walk level {level} outside [0, {schedule.ell0 - 1}]")
    lower = schedule.lower_bounds[level]
    upper = schedule.upper_bounds[level]
    if upper < lower:
        raise DomainError(f"empty walk range [{lower}, {upper}] at level {level}")
    q = 2.0 ** (-(schedule.ell0 - level) * schedule.d)
    return WalkSpec(level=level, q=q, lower=lower, upper=upper, start=lower if start is None else start)


def stationary_lower_occupancy(spec: WalkSpec) -> float:
    """
    Stationary probability of the lower boundary, (1 - q) / (width - q).

    Detailed balance gives the boundary state weight 1 - q relative to each
    of the other ``width - 1`` states, which is below 1 / width.
    """
    if spec.width == 1:
        return 1.0
    return (1.0 - spec.q) / (spec.width - spec.q)


def simulate_reflected_walk(
    spec: WalkSpec,
    periods: int,
    chains: int = 64,
    seed: int = 0,
    burn_in: Optional[int] = None
) -> WalkOccupancy:
    """
    Fraction of period starts the walk spends on its lower boundary.

    Each period a demand step (probability q, down, reflected at the lower
    boundary) is followed by a supply step (probability q, up, reflected at
    the upper boundary). Independent chains run side by side; the standard
    error is the spread of the per-chain occupancies.
    """
    if periods < 1 or chains < 2:
        raise DomainError("need at least one period and two chains")
    if burn_in is None:
        burn_in = math.ceil(4 * spec.width ** 2 / spec.q)
    rng = replication_rng(seed, 0)
    walk = np.full(chains, spec.start, dtype=np.int64)
    hits = np.zeros(chains, dtype=np.int64)
    for t in range(burn_in + periods):
        if t >= burn_in:
            hits += walk == spec.lower
        down = rng.random(chains) < spec.q
        walk = np.maximum(spec.lower, walk - down)
        up = rng.random(chains) < spec.q
        walk = np.minimum(spec.upper, walk + up)
    occupancy = hits / periods
    return WalkOccupancy(
        occupancy=float(occupancy.mean()),
        stderr=float(occupancy.std(ddof=1) / math.sqrt(chains)),
        expected=stationary_lower_occupancy(spec),
        periods=periods,
        chains=chains,
    )


def walk_domination_check(trace: SimulationTrace, level: int, key: int) -> bool:
    """
    Whether the cell's supply count dominates its coupled reflected walk.

    From T_h, the first period start with n_h >= floor(gamma_l), the walk
    starts at min(n_h(T_h), upper) and follows the cell's own arrivals: it
    steps down on a demand arrival in h (not below the lower boundary) and
    then up on a supply arrival in h (not above the upper boundary). The
    check holds when n_h >= W at every period start and n~_h >= W~ after
    every match. A cell that never reaches its boundary passes trivially.

    Raises:
        DomainError: If the trace has no supply arrivals or ``level`` is not below ell0
    """
    if trace.supply_leaves is None:
        raise DomainError("trace has no supply arrival records")
    spec = walk_spec(trace.schedule, level)
    lower, upper = spec.lower, spec.upper
    starts, after = trace.node_series(level, key)
    shift = trace.d * level
    demand = (trace.demand_leaves >> shift) == key
    arrivals = (trace.supply_leaves >> shift) == key
    matched = (trace.matched_leaves >> shift) == key

    reached = np.flatnonzero(starts[:-1] >= lower)
    if len(reached) == 0:
        return True
    first = int(reached[0])
    walk = min(int(starts[first]), upper)
    # between events neither the walk nor the count moves
    events = np.flatnonzero((demand | arrivals | matched)[first:]) + first
    for t in events.tolist():
        walk_after = max(lower, walk - int(demand[t]))
        if after[t] < walk_after:
            return False
        walk = min(upper, walk_after + int(arrivals[t]))
        if starts[t + 1] < walk:
            return False
    return True


def audit_trace(trace: SimulationTrace) -> Tuple[int, int]:
    """
    Run ``walk_domination_check`` on every cell below the root.

    Returns:
        ``(checked, failed)`` cell counts
    """
    checked = failed = 0
    for level in range(trace.ell0):
        for key in range(trace.cells_at(level)):
            checked += 1
            if not walk_domination_check(trace, level, key):
                failed += 1
    return checked, failed


# tail bounds


def crossover_level(N: int, M: int, d: int, ell0: int) -> Optional[int]:
    """
    Smallest level l in [0, ell0] with M^2 >= 19 N 2^(d (ell0 - l)), in exact integers.

    None when no level qualifies (always for M = 0).
    """
    if M <= 0:
        return None
    target = M * M
    for level in range(ell0 + 1):
        if target >= TAIL_CONSTANT * N * (1 << (d * (ell0 - level))):
            return level
    return None


def tail_bound_diagnostic(trace: SimulationTrace, level: Optional[int] = None) -> List[TailBoundRow]:
    """
    Mean excess demand (n^_h(N) - n_h(1))_+ per level against its envelope.

    The envelope is sqrt(N 2^(d (l - ell0))), multiplied by
    exp(-M^2 2^(d (l - ell0)) / (19 N)) from the crossover level up.

    Args:
        trace: Semi-dynamic trace
        level: A single level to report; all levels 0..ell0 by default

    Raises:
        DomainError: If ``level`` is out of range
    """
    if level is not None and not 0 <= level <= trace.ell0:
        raise DomainError(f"level {level} outside [0, {trace.ell0}]")
    N, M, d, ell0 = trace.horizon, trace.excess, trace.d, trace.ell0
    crossover = crossover_level(N, M, d, ell0)
    rows = []
    for l in ([level] if level is not None else range(ell0 + 1)):
        excess = np.maximum(trace.demand_counts(l) - trace.initial_counts(l), 0)
        share = 2.0 ** (d * (l - ell0))
        envelope = math.sqrt(N * share)
        damped = crossover is not None and l >= crossover
        if damped:
            envelope *= math.exp(-(M * M) * share / (TAIL_CONSTANT * N))
        empirical = float(excess.mean())
        rows.append(TailBoundRow(
            level=l,
            nodes=len(excess),
            empirical_excess=empirical,
            envelope=envelope,
            ratio=empirical / envelope if envelope > 0 else math.inf,
            damped=damped,
        ))
    return rows


# capacity planning


def geometric_m_grid(n: int, d: int, points: int = 9, spread: float = 4.0) -> List[int]:
    """
    Geometric grid of m values around n^(d/(d+1)), from centre/spread to centre*spread.

    Values are rounded to distinct integers >= 2.
    """
    centre = n ** (d / (d + 1.0))
    exps = np.linspace(-1.0, 1.0, points)
    return sorted({max(2, int(round(centre * spread ** e))) for e in exps})


def _capacity_cost(
    d: int,
    reps: int,
    horizon_per_m: int,
    policy: PolicyKind,
    seed: int,
    beta: Optional[float],
    balanced_slack: bool,
    job: Tuple[int, int]
):
    n, m = job
    cfg = SimConfig(
        model=ModelKind.CAPACITY,
        d=d,
        N=horizon_per_m * m + 4 * n,
        m=m,
        n=n,
        policy=policy,
        seed=derive_seed(seed, "capacity", n, m),
        replications=reps,
        beta_override=beta,
        balanced_slack=balanced_slack,
    )
    return run_capacity_sim(cfg)


def _grid_step(ms: Sequence[int]) -> float:
    return max(1.25, (ms[-1] / ms[0]) ** (1.0 / (len(ms) - 1)))


def _widened(ms: Sequence[int], best: int) -> List[int]:
    """Two more values past the edge the optimum sits on."""
    step = _grid_step(ms)
    if best == 0:
        extra = [max(2, int(round(ms[0] / step ** k))) for k in (1, 2)]
    else:
        extra = [int(round(ms[-1] * step ** k)) for k in (1, 2)]
    return sorted({m for m in extra if m not in ms})


def _refined(ms: Sequence[int], best: int) -> List[int]:
    """Geometric midpoints on both sides of an interior optimum."""
    extra = {int(round(math.sqrt(ms[best] * ms[j]))) for j in (best - 1, best + 1)}
    return sorted(m for m in extra if m not in ms)


def smoothed_minimum(series: Sequence[Tuple[int, float]], best: int) -> float:
    """
    Minimiser of a parabola in log m through the costs around ``best``.

    Uses up to two neighbours on each side. Falls back to the grid value when
    ``best`` is on the edge or the parabola does not open upwards; the
    result stays between the neighbours of ``best``.
    """
    if best == 0 or best == len(series) - 1:
        return float(series[best][0])
    window = series[max(0, best - 2):best + 3]
    x = np.log([m for m, _ in window])
    y = np.array([c for _, c in window])
    a, b, _ = np.polyfit(x, y, 2)
    if a <= 0:
        return float(series[best][0])
    vertex = -b / (2.0 * a)
    low, high = math.log(series[best - 1][0]), math.log(series[best + 1][0])
    return float(math.exp(min(max(vertex, low), high)))


def capacity_plan(
    d: int,
    n_grid: Sequence[int],
    m_grid_factory: Optional[Callable[[int], Sequence[int]]] = None,
    reps: int = 1,
    seed: int = 0,
    cost_fn: Optional[Callable[[int, int], float]] = None,
    horizon_per_m: int = 200,
    threads: int = 1,
    policy: PolicyKind = PolicyKind.HIERARCHICAL_GREEDY,
    beta: Optional[float] = None,
    balanced_slack: bool = False,
    widen_rounds: int = 2,
    refine: bool = True
) -> CapacityPlan:
    """
    Best fleet slack m* per load factor n, and the exponent of m* in n.

    Each (n, m) is simulated with the capacity engine for
    ``horizon_per_m * m + 4 n`` periods over ``reps`` pooled replications
    and scored by its total cost m/n + mean match distance. ``cost_fn(n, m)``
    replaces the simulation.

    An optimum on the edge of its grid extends the grid past that edge, up to
    ``widen_rounds`` times; an interior one gets geometric midpoints on both
    sides. The exponent is fitted to the parabola-smoothed minimisers. An
    optimum still on the edge is flagged.

    Raises:
        DomainError: With fewer than 3 load factors or an m grid under 3 values
    """
    if len(n_grid) < 3:
        raise DomainError(f"need at least 3 load factors, got {len(n_grid)}")
    factory = m_grid_factory or (lambda n: geometric_m_grid(n, d))
    grids = {n: sorted(set(int(m) for m in factory(n))) for n in n_grid}
    for n, ms in grids.items():
        if len(ms) < 3:
            raise DomainError(f"m grid for n={n} has {len(ms)} values, need at least 3")

    costs: Dict[Tuple[int, int], float] = {}
    reports = {}
    simulate = partial(_capacity_cost, d, reps, horizon_per_m, policy, seed, beta, balanced_slack)

    def evaluate(jobs: List[Tuple[int, int]]) -> None:
        if cost_fn is not None:
            costs.update({job: float(cost_fn(*job)) for job in jobs})
            return
        for job, report in zip(jobs, run_jobs(simulate, jobs, threads)):
            reports[job] = report
            costs[job] = report.total_cost

    def argmin(n: int) -> int:
        ms = grids[n]
        return min(range(len(ms)), key=lambda i: costs[(n, ms[i])])

    evaluate([(n, m) for n in n_grid for m in grids[n]])
    for _ in range(widen_rounds):
        jobs = []
        for n in n_grid:
            best = argmin(n)
            if best in (0, len(grids[n]) - 1):
                jobs.extend((n, m) for m in _widened(grids[n], best))
        if not jobs:
            break
        evaluate(jobs)
        for n, m in jobs:
            grids[n] = sorted(grids[n] + [m])
    if refine:
        jobs = []
        for n in n_grid:
            best = argmin(n)
            if 0 < best < len(grids[n]) - 1:
                jobs.extend((n, m) for m in _refined(grids[n], best))
        evaluate(jobs)
        for n, m in jobs:
            grids[n] = sorted(grids[n] + [m])

    points = []
    for n in n_grid:
        ms = grids[n]
        series = [(m, costs[(n, m)]) for m in ms]
        best = argmin(n)
        boundary = best in (0, len(ms) - 1)
        if boundary:
            logger.warning("capacity optimum for n=%d sits at grid edge m=%d; widen the grid", n, ms[best])
        points.append(CapacityPoint(
            n=n,
            m_star=ms[best],
            m_smoothed=smoothed_minimum(series, best),
            cost=series[best][1],
            boundary=boundary,
            costs=series,
            report=reports.get((n, ms[best])),
        ))
    fit = fit_scaling([(p.n, p.m_smoothed, None) for p in points])
    return CapacityPlan(d=d, points=points, fit=fit)


# sandwich checks


def band_ratio(values: Sequence[float]) -> float:
    """max / min of a positive series."""
    if not values or min(values) <= 0:
        raise DomainError("band ratio needs positive values")
    return max(values) / min(values)


def sandwich_ratios(ms: Sequence[int], costs: Sequence[float]) -> Tuple[float, float]:
    """
    Band ratios of c(m) m / log2 m and c(m) m / (log2 m)^2 on the line.

    A bounded first series means the cost is at least of order log m / m,
    a bounded second one that it is at most of order (log m)^2 / m.
    """
    if len(ms) != len(costs):
        raise DomainError("ms and costs differ in length")
    lower = [c * m / math.log2(m) for m, c in zip(ms, costs)]
    upper = [c * m / math.log2(m) ** 2 for m, c in zip(ms, costs)]
    return band_ratio(lower), band_ratio(upper)
