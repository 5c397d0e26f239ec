import math

import numpy as np
import pytest

from spatial_match import (
    ConfigError,
    DomainError,
    ScalePoint,
    SimConfig,
    SimulationTrace,
    WalkSpec,
    bootstrap_exponent,
    capacity_plan,
    crossover_level,
    fit_scaling,
    gamma_schedule_fully_dynamic,
    run_fully_dynamic,
    run_semi_dynamic,
    sandwich_ratios,
    simulate_reflected_walk,
    stationary_lower_occupancy,
    sweep,
    tail_bound_diagnostic,
    walk_domination_check,
    walk_spec,
)
from spatial_match.experiments import audit_trace, fit_sweep, geometric_m_grid, point_config, smoothed_minimum


class TestFitScaling:
    """Test log-log regression."""

    def test_exact_power_law(self):
        """Test recovery of a noiseless exponent."""
        fit = fit_scaling([(s, 2.0 * s ** -0.5) for s in (1, 4, 16, 64)])
        assert fit.exponent == pytest.approx(-0.5)
        assert fit.intercept == pytest.approx(math.log(2.0))
        assert fit.r2 == pytest.approx(1.0)
        assert not fit.weighted

    def test_weighted_when_errors_known(self):
        """Test that standard errors switch on weighting."""
        points = [ScalePoint(scale=s, cost=s ** -1.0, stderr=0.01 * s ** -1.0) for s in (2, 4, 8, 16)]
        fit = fit_scaling(points)
        assert fit.weighted
        assert fit.exponent == pytest.approx(-1.0)

    def test_missing_error_falls_back(self):
        """Test that one missing standard error gives an unweighted fit."""
        fit = fit_scaling([(2, 0.5, 0.01), (4, 0.25, None), (8, 0.125, 0.01)])
        assert not fit.weighted

    def test_rejects_bad_input(self):
        """Test too few points and non-positive values."""
        with pytest.raises(DomainError):
            fit_scaling([(1, 1.0), (2, 0.5)])
        with pytest.raises(DomainError):
            fit_scaling([(1, 1.0), (2, 0.0), (4, 0.25)])

    def test_bootstrap_interval(self):
        """Test that the interval sits around the true exponent."""
        rng = np.random.default_rng(1)
        scales = [2, 4, 8, 16, 32]
        means = [[s ** -1.0 * (1 + 0.02 * rng.standard_normal()) for _ in range(8)] for s in scales]
        low, high = bootstrap_exponent(scales, means, seed=4)
        assert low <= high
        assert low - 0.02 <= -1.0 <= high + 0.02
        assert high - low < 0.1


class TestSweep:
    """Test grid sweeps."""

    def test_point_config(self):
        """Test tied fields, derived seeds and warmup reset."""
        base = SimConfig(model="fully_dynamic", d=1, N=1000, m=16, warmup=500, seed=9)
        cfg = point_config(base, "m", 64, ties={"N": 5})
        assert cfg.m == 64
        assert cfg.N == 320
        assert cfg.warmup is None
        assert cfg.seed != base.seed
        assert point_config(base, "m", 64, ties={"N": 5}).seed == cfg.seed

    def test_cost_falls_with_n(self):
        """Test the static line trend over a small grid."""
        base = SimConfig(model="static", d=1, N=64, replications=20, seed=2)
        points = sweep(base, "N", [64, 256, 1024])
        assert [p.value for p in points] == [64, 256, 1024]
        costs = [p.report.mean_cost for p in points]
        assert costs[0] > costs[1] > costs[2]
        fit = fit_sweep(points, bootstrap_seed=0)
        assert fit.exponent == pytest.approx(-0.5, abs=0.15)
        assert fit.ci_low is not None and fit.ci_low <= fit.ci_high

    def test_independent_of_threads(self):
        """Test identical sweeps for one and two workers."""
        base = SimConfig(model="semi_dynamic", d=2, N=64, replications=3, seed=6)
        serial = sweep(base, "N", [64, 128])
        pooled = sweep(base, "N", [64, 128], threads=2)
        assert [p.report.replication_means for p in serial] == [p.report.replication_means for p in pooled]

    def test_empty_grid(self):
        """Test that an empty grid is a config error."""
        with pytest.raises(ConfigError):
            sweep(SimConfig(model="static", d=1, N=4), "N", [])


class TestReflectedWalk:
    """Test walks and walk domination."""

    def test_stationary_occupancy(self):
        """Test the closed-form lower-boundary probability."""
        spec = WalkSpec(level=0, q=0.25, lower=0, upper=3, start=0)
        assert stationary_lower_occupancy(spec) == pytest.approx(0.2)
        assert stationary_lower_occupancy(WalkSpec(level=0, q=0.5, lower=6, upper=6, start=6)) == 1.0

    def test_walk_spec_from_schedule(self):
        """Test boundaries and step probability for d=1, m=16."""
        spec = walk_spec(gamma_schedule_fully_dynamic(1, 16), 0)
        assert (spec.lower, spec.upper, spec.q) == (6, 6, 0.5)
        with pytest.raises(DomainError):
            walk_spec(gamma_schedule_fully_dynamic(1, 16), 1)

    def test_simulated_occupancy(self):
        """Test the simulated walk against its stationary law."""
        spec = WalkSpec(level=0, q=0.25, lower=2, upper=5, start=2)
        result = simulate_reflected_walk(spec, periods=20_000, seed=3)
        assert result.expected == pytest.approx(0.2)
        assert abs(result.occupancy - result.expected) <= 4 * result.stderr + 0.01

    def test_hg_trace_dominates(self):
        """Test that every cell of an HG run dominates its walk."""
        cfg = SimConfig(model="fully_dynamic", d=1, N=3000, m=64, init="even_grid", seed=1, record_trace=True)
        trace = run_fully_dynamic(cfg).traces[0]
        checked, failed = audit_trace(trace)
        assert checked == sum(trace.cells_at(level) for level in range(trace.ell0))
        assert failed == 0

    def test_corrupted_trace_fails(self):
        """Test that a trace draining one leaf is caught."""
        cfg = SimConfig(model="fully_dynamic", d=1, N=3000, m=64, init="even_grid", seed=1, record_trace=True)
        trace = run_fully_dynamic(cfg).traces[0]
        drained = SimulationTrace(
            trace.d, trace.ell0, trace.schedule, trace.initial_leaf_counts,
            trace.demand_leaves, np.zeros_like(trace.matched_leaves), trace.supply_leaves,
        )
        assert not walk_domination_check(drained, 0, 0)
        assert audit_trace(drained)[1] > 0

    def test_semi_dynamic_trace_rejected(self):
        """Test that a trace without supply arrivals cannot be audited."""
        cfg = SimConfig(model="semi_dynamic", d=1, N=64, record_trace=True)
        trace = run_semi_dynamic(cfg).traces[0]
        with pytest.raises(DomainError):
            walk_domination_check(trace, 0, 0)


class TestTailBounds:
    """Test the excess-demand diagnostics."""

    def test_crossover_level(self):
        """Test the integer crossover test."""
        assert crossover_level(16, 64, 1, 4) == 1
        assert crossover_level(16, 16, 1, 4) is None
        assert crossover_level(16, 0, 1, 4) is None

    def test_diagnostic_rows(self):
        """Test one row per level and an empty root excess."""
        cfg = SimConfig(model="semi_dynamic", d=1, N=1024, record_trace=True, seed=2)
        trace = run_semi_dynamic(cfg).traces[0]
        rows = tail_bound_diagnostic(trace)
        assert [r.level for r in rows] == list(range(trace.ell0 + 1))
        assert rows[-1].empirical_excess == 0.0
        assert rows[-1].envelope == pytest.approx(32.0)
        assert not any(r.damped for r in rows)
        assert rows[0].nodes == 1024
        with pytest.raises(DomainError):
            tail_bound_diagnostic(trace, level=trace.ell0 + 1)

    def test_damped_with_excess(self):
        """Test that large excess supply damps the upper levels."""
        cfg = SimConfig(model="semi_dynamic", d=1, N=256, M=256, record_trace=True, seed=3)
        trace = run_semi_dynamic(cfg).traces[0]
        rows = tail_bound_diagnostic(trace)
        level = crossover_level(256, 256, 1, trace.ell0)
        assert [r.damped for r in rows] == [r.level >= level for r in rows]


def narrow_low_grid(n):
    # starts well below the optimum (n/2)^(2/3) of m/n + m^(-1/2)
    return [n // 128, 3 * n // 256, n // 64]


class TestCapacityPlan:
    """Test fleet sizing."""

    def test_grid(self):
        """Test the geometric m grid around n^(d/(d+1))."""
        grid = geometric_m_grid(4096, 2)
        assert grid == sorted(set(grid))
        assert grid[0] == 64
        assert grid[-1] == 1024

    def test_synthetic_exponent(self):
        """Test the fitted exponent of a closed-form cost."""
        plan = capacity_plan(
            d=2,
            n_grid=[2 ** k for k in range(8, 15)],
            m_grid_factory=lambda n: geometric_m_grid(n, 2, points=41),
            cost_fn=lambda n, m: m / n + m ** -0.5,
        )
        assert plan.fit.exponent == pytest.approx(2 / 3, abs=0.05)
        assert plan.boundary_flags == []

    def test_boundary_flagged(self):
        """Test that an optimum on the grid edge is flagged."""
        plan = capacity_plan(
            d=1,
            n_grid=[4, 8, 16],
            m_grid_factory=lambda n: [2, 3, 4],
            cost_fn=lambda n, m: float(m),
        )
        assert plan.boundary_flags == [4, 8, 16]

    def test_too_few_load_factors(self):
        """Test the minimum number of load factors."""
        with pytest.raises(DomainError):
            capacity_plan(d=2, n_grid=[16, 32], cost_fn=lambda n, m: 1.0)

    def test_widening_reaches_interior_optimum(self):
        """Test that an optimum past the grid edge is found by extending the grid."""
        cost = lambda n, m: m / n + m ** -0.5
        plan = capacity_plan(d=2, n_grid=[2048, 4096, 8192], m_grid_factory=narrow_low_grid, cost_fn=cost)
        assert plan.boundary_flags == []
        for point in plan.points:
            assert len(point.costs) > 3
            assert point.m_smoothed == pytest.approx((point.n / 2) ** (2 / 3), rel=0.15)

    def test_no_widening_flags_edge(self):
        """Test that without extra rounds the edge optimum stays flagged."""
        cost = lambda n, m: m / n + m ** -0.5
        plan = capacity_plan(
            d=2,
            n_grid=[2048, 4096, 8192],
            m_grid_factory=narrow_low_grid,
            cost_fn=cost,
            widen_rounds=0,
        )
        assert plan.boundary_flags == [2048, 4096, 8192]
        assert [p.m_smoothed for p in plan.points] == [float(p.m_star) for p in plan.points]

    def test_refinement_adds_midpoints(self):
        """Test geometric midpoints around an interior optimum."""
        cost = lambda n, m: (math.log(m) - math.log(n / 8)) ** 2
        plan = capacity_plan(d=2, n_grid=[256, 512, 1024], m_grid_factory=lambda n: [n // 32, n // 8, n // 2], cost_fn=cost)
        for point in plan.points:
            values = [m for m, _ in point.costs]
            assert point.m_star == point.n // 8
            assert int(round(math.sqrt((point.n // 32) * (point.n // 8)))) in values
            assert point.m_smoothed == pytest.approx(point.n / 8, rel=1e-6)
        assert plan.fit.exponent == pytest.approx(1.0, abs=1e-6)


class TestSmoothedMinimum:
    """Test the parabola-smoothed minimiser."""

    def test_exact_parabola(self):
        """Test that a parabola in log m gives back its vertex."""
        ms = [25, 50, 100, 200, 400]
        series = [(m, (math.log(m) - math.log(130)) ** 2) for m in ms]
        assert smoothed_minimum(series, 2) == pytest.approx(130, rel=1e-6)

    def test_clamped_to_neighbours(self):
        """Test that the vertex never leaves the neighbours of the grid optimum."""
        series = [(10, 1.0), (20, 0.5), (40, 0.49), (80, 0.9)]
        assert 20 <= smoothed_minimum(series, 2) <= 80

    def test_edge_and_concave_fall_back(self):
        """Test the grid value at an edge or for a parabola opening downwards."""
        series = [(10, 1.0), (20, 2.0), (40, 3.0)]
        assert smoothed_minimum(series, 0) == 10.0
        assert smoothed_minimum(series, 2) == 40.0
        concave = [(10, 0.0), (20, 3.0), (40, 4.0), (80, 3.0), (160, 0.0)]
        assert smoothed_minimum(concave, 2) == 40.0


def test_sandwich_ratios():
    """Test both normalizations of a cost between the two orders."""
    ms = [2 ** k for k in range(4, 13)]
    costs = [math.log2(m) ** 1.5 / m for m in ms]
    lower, upper = sandwich_ratios(ms, costs)
    assert lower == pytest.approx(math.sqrt(3))
    assert upper == pytest.approx(math.sqrt(3))
