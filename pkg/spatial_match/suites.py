"""
Acceptance suites run by ``spatial-match verify``.

Each check returns a CheckResult naming its criterion. ``scale`` shrinks
replication counts and horizons for quick runs; 1.0 is the full suite.
"""

import logging
import math
import time
from typing import Callable, Dict, List, Optional, Tuple

from .engines import nn_distance_stats, run_fully_dynamic
from .errors import ConfigError
from .experiments import (
    audit_trace,
    band_ratio,
    capacity_plan,
    fit_sweep,
    geometric_m_grid,
    sandwich_ratios,
    simulate_reflected_walk,
    sweep,
    walk_spec,
)
from .models import CheckResult, ModelKind, PolicyKind, SimConfig
from .policies import gamma_schedule_fully_dynamic, steady_state_beta
from .rng import derive_seed, replication_rng
from .static_match import brute_force_match, match_exact_flow, match_line_balanced, match_line_excess

logger = logging.getLogger("spatial_match")

ORACLE_TOLERANCE = 1e-9
DEBUG_GRID = [(d, m) for d in (1, 2, 3) for m in (16, 64, 256)]


class SuiteContext:
    """Shared settings and cached runs of one suite invocation."""

    def __init__(self, scale: float = 1.0, threads: int = 1, seed: int = 0):
        if scale <= 0:
            raise ConfigError(f"scale must be positive, got {scale}", field="scale")
        self.scale = scale
        self.threads = threads
        self.seed = seed
        self._debug_runs = None

    def count(self, full: int, minimum: int) -> int:
        """``full`` scaled down, never below ``minimum``."""
        return max(minimum, int(round(full * self.scale)))

    def debug_runs(self):
        """Fully dynamic debug runs with traces over the invariant grid, computed once."""
        if self._debug_runs is None:
            horizon = self.count(100_000, 2_000)
            runs = []
            for d, m in DEBUG_GRID:
                cfg = SimConfig(
                    model=ModelKind.FULLY_DYNAMIC,
                    d=d,
                    N=horizon,
                    m=m,
                    seed=derive_seed(self.seed, "invariants", d, m),
                    debug=True,
                    record_trace=True,
                )
                runs.append((d, m, run_fully_dynamic(cfg)))
            self._debug_runs = runs
        return self._debug_runs


Check = Callable[[SuiteContext], Tuple[bool, str]]


# oracles


def check_oracle_equivalence(ctx: SuiteContext) -> Tuple[bool, str]:
    instances = ctx.count(1000, 50)
    rng = replication_rng(derive_seed(ctx.seed, "oracles"), 0)
    worst = 0.0
    for _ in range(instances):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 9))
        excess = int(rng.integers(0, 4))
        demand = [tuple(p) for p in rng.random((n, d)).tolist()]
        supply = [tuple(p) for p in rng.random((n + excess, d)).tolist()]
        costs = [
            brute_force_match(supply, demand).total_cost,
            match_exact_flow(supply, demand).total_cost,
        ]
        if d == 1:
            costs.append(match_line_excess([p[0] for p in supply], [p[0] for p in demand]).total_cost)
        worst = max(worst, max(costs) - min(costs))
    return worst <= ORACLE_TOLERANCE, f"{instances} instances, largest disagreement {worst:.3g}"


LINE_FIXTURES = [
    ("balanced", [0.1, 0.5], [0.2, 0.6], 0.1),
    ("balanced", [0.9, 0.1], [0.1, 0.9], 0.0),
    ("balanced", [0.0, 0.4, 0.8], [0.1, 0.5, 0.9], 0.1),
    ("excess", [0.0, 0.5, 1.0], [0.49], 0.01),
    ("excess", [0.0, 0.1, 0.9], [0.05, 0.95], 0.05),
]


def check_line_fixtures(ctx: SuiteContext) -> Tuple[bool, str]:
    failures = []
    for kind, supply, demand, avg in LINE_FIXTURES:
        solve = match_line_balanced if kind == "balanced" else match_line_excess
        result = solve(supply, demand)
        if not math.isclose(result.avg_cost, avg, abs_tol=1e-12):
            failures.append(f"{kind} {supply}/{demand}: {result.avg_cost} != {avg}")
    return not failures, "; ".join(failures) or f"{len(LINE_FIXTURES)} hand-solved instances"


# exponents


def _exponent_check(
    ctx: SuiteContext,
    base: SimConfig,
    param: str,
    lo: int,
    hi: int,
    target: float,
    tolerance: float,
    ties: Optional[Dict[str, float]] = None
) -> Tuple[bool, str]:
    points = sweep(base, param, [2 ** k for k in range(lo, hi + 1)], ties=ties, threads=ctx.threads)
    fit = fit_sweep(points)
    passed = abs(fit.exponent - target) <= tolerance
    return passed, f"exponent {fit.exponent:.4f} (target {target:.4f} +/- {tolerance}), r2 {fit.r2:.3f}"


def check_static_line(ctx: SuiteContext) -> Tuple[bool, str]:
    base = SimConfig(model=ModelKind.STATIC, d=1, N=2 ** 8, M=0, seed=ctx.seed, replications=ctx.count(200, 20))
    return _exponent_check(ctx, base, "N", 8, 14, -0.5, 0.07)


def check_semi_dynamic_line_excess(ctx: SuiteContext) -> Tuple[bool, str]:
    base = SimConfig(model=ModelKind.SEMI_DYNAMIC, d=1, N=2 ** 8, M=2 ** 8, seed=ctx.seed, replications=ctx.count(50, 8))
    return _exponent_check(ctx, base, "N", 8, 14, -1.0, 0.15, ties={"M": 1.0})


def check_semi_dynamic_cube(ctx: SuiteContext) -> Tuple[bool, str]:
    base = SimConfig(model=ModelKind.SEMI_DYNAMIC, d=3, N=2 ** 9, M=0, seed=ctx.seed, replications=ctx.count(16, 3))
    return _exponent_check(ctx, base, "N", 9, 18, -1.0 / 3.0, 0.08)


def _fully_dynamic_costs(
    ctx: SuiteContext,
    d: int,
    periods_per_m: int,
    steady_state: bool = False
) -> Tuple[List[int], List[float]]:
    base = SimConfig(
        model=ModelKind.FULLY_DYNAMIC,
        d=d,
        N=periods_per_m * 2 ** 6,
        m=2 ** 6,
        seed=ctx.seed,
        replications=ctx.count(4, 1),
        beta_override=steady_state_beta(d) if steady_state else None,
        balanced_slack=steady_state,
    )
    points = sweep(base, "m", [2 ** k for k in range(6, 13)], ties={"N": periods_per_m}, threads=ctx.threads)
    return [p.value for p in points], [p.report.mean_cost for p in points]


def check_fully_dynamic_band(ctx: SuiteContext) -> Tuple[bool, str]:
    ms, costs = _fully_dynamic_costs(ctx, 2, ctx.count(200, 40), steady_state=True)
    ratio = band_ratio([c * math.sqrt(m) for m, c in zip(ms, costs)])
    return ratio <= 2.0, f"max/min of cost * m^(1/2) = {ratio:.3f} (limit 2.0)"


def check_fully_dynamic_sandwich(ctx: SuiteContext) -> Tuple[bool, str]:
    ms, costs = _fully_dynamic_costs(ctx, 1, ctx.count(200, 40))
    lower, upper = sandwich_ratios(ms, costs)
    passed = lower <= 4.0 and upper <= 4.0
    return passed, f"lower-normalized band {lower:.3f}, upper-normalized band {upper:.3f} (limit 4.0)"


def check_nn_baseline(ctx: SuiteContext) -> Tuple[bool, str]:
    samples = ctx.count(2000, 200)
    details = []
    passed = True
    for d in (1, 2, 3):
        normalized = []
        for k in range(4, 13, 2):
            m = 2 ** k
            mean, _ = nn_distance_stats(d, m, samples, derive_seed(ctx.seed, "nn", d, m))
            normalized.append(mean * m ** (1.0 / d))
        ratio = band_ratio(normalized)
        passed = passed and ratio <= 1.5
        details.append(f"d={d} band {ratio:.3f}")

        for k in (4, 6, 8):
            m = 2 ** k
            mean, stderr = nn_distance_stats(d, m, samples, derive_seed(ctx.seed, "nn", d, m))
            cfg = SimConfig(
                model=ModelKind.FULLY_DYNAMIC,
                d=d,
                N=ctx.count(100, 20) * m,
                m=m,
                seed=derive_seed(ctx.seed, "baseline", d, m),
            )
            cost = run_fully_dynamic(cfg).mean_cost
            if cost < mean - 3 * stderr:
                passed = False
                details.append(f"d={d} m={m}: cost {cost:.4g} below baseline {mean:.4g}")
    return passed, "; ".join(details)


# invariants


def check_boundary_invariants(ctx: SuiteContext) -> Tuple[bool, str]:
    runs = ctx.debug_runs()
    total = sum(report.invariant_violations for _, _, report in runs)
    return total == 0, f"{total} violations over {len(runs)} runs of {runs[0][2].periods_measured + runs[0][2].warmup} periods"


def check_walk_domination(ctx: SuiteContext) -> Tuple[bool, str]:
    checked = failed = 0
    for _, _, report in ctx.debug_runs():
        for trace in report.traces:
            c, f = audit_trace(trace)
            checked += c
            failed += f
    return failed == 0, f"{failed} of {checked} cells failed"


def check_reflected_walk(ctx: SuiteContext) -> Tuple[bool, str]:
    periods = ctx.count(50_000, 5_000)
    details = []
    passed = True
    for d, m in ((1, 64), (2, 256)):
        schedule = gamma_schedule_fully_dynamic(d, m)
        for level in range(schedule.ell0):
            spec = walk_spec(schedule, level)
            result = simulate_reflected_walk(spec, periods, seed=derive_seed(ctx.seed, "walk", d, m, level))
            gap = abs(result.occupancy - result.expected)
            ok = gap <= 3 * result.stderr + 1e-12
            passed = passed and ok
            details.append(f"d={d} m={m} l={level}: {result.occupancy:.4f} vs {result.expected:.4f}")
    return passed, "; ".join(details)


# capacity


def check_capacity_exponent(ctx: SuiteContext) -> Tuple[bool, str]:
    plan = capacity_plan(
        d=2,
        n_grid=[2 ** k for k in range(8, 14)],
        m_grid_factory=lambda n: geometric_m_grid(n, 2),
        reps=ctx.count(4, 2),
        seed=ctx.seed,
        horizon_per_m=ctx.count(200, 20),
        threads=ctx.threads,
        policy=PolicyKind.HIERARCHICAL_GREEDY,
        beta=steady_state_beta(2),
        balanced_slack=True,
    )
    exponent = plan.fit.exponent
    detail = f"m* exponent {exponent:.4f} (target 0.667 +/- 0.10)"
    if plan.boundary_flags:
        detail += f"; optimum on grid edge for n in {plan.boundary_flags}"
    return abs(exponent - 2.0 / 3.0) <= 0.10, detail


SUITES: Dict[str, List[Tuple[str, Check]]] = {
    "oracles": [
        ("1-oracle-equivalence", check_oracle_equivalence),
        ("1-line-fixtures", check_line_fixtures),
    ],
    "invariants": [
        ("8a-boundary-invariants", check_boundary_invariants),
        ("8b-walk-domination", check_walk_domination),
        ("8c-reflected-walk", check_reflected_walk),
    ],
    "exponents-fast": [
        ("2-static-line-exponent", check_static_line),
        ("3-semi-dynamic-line-excess", check_semi_dynamic_line_excess),
        ("7-nearest-neighbour-baseline", check_nn_baseline),
    ],
    "exponents-full": [
        ("4-semi-dynamic-cube", check_semi_dynamic_cube),
        ("5-fully-dynamic-band", check_fully_dynamic_band),
        ("6-fully-dynamic-line-sandwich", check_fully_dynamic_sandwich),
    ],
    "capacity": [
        ("9-capacity-exponent", check_capacity_exponent),
    ],
}


def run_suite(name: str, scale: float = 1.0, threads: int = 1, seed: int = 0) -> List[CheckResult]:
    """
    Run every check of a suite.

    Raises:
        ConfigError: If the suite name is unknown
    """
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; choose from {sorted(SUITES)}", field="suite")
    ctx = SuiteContext(scale=scale, threads=threads, seed=seed)
    results = []
    for criterion, check in SUITES[name]:
        started = time.perf_counter()
        passed, detail = check(ctx)
        seconds = time.perf_counter() - started
        logger.info("%s %s in %.1fs: %s", criterion, "passed" if passed else "FAILED", seconds, detail)
        results.append(CheckResult(criterion=criterion, passed=passed, detail=detail, seconds=seconds))
    return results
