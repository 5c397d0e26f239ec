import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from spatial_match import (
    CapacityExceededError,
    DomainError,
    brute_force_match,
    match_exact_flow,
    match_line_balanced,
    match_line_excess,
)
from spatial_match.static_match import _certify, _shortest_augmenting_paths, cost_matrix


class TestLineBalanced:
    """Test sort-rank matching on the line."""

    def test_rank_pairs(self):
        """Test the k-th demand goes to the k-th supply."""
        result = match_line_balanced([0.1, 0.5], [0.2, 0.6])
        assert result.pairs == [(0, 0), (1, 1)]
        assert result.avg_cost == pytest.approx(0.1)

    def test_identical_multisets(self):
        """Test that identical multisets cost nothing."""
        assert match_line_balanced([0.9, 0.1], [0.1, 0.9]).avg_cost == pytest.approx(0.0)

    def test_three_points(self):
        """Test a hand-checked three point instance."""
        assert match_line_balanced([0.0, 0.4, 0.8], [0.1, 0.5, 0.9]).avg_cost == pytest.approx(0.1)

    def test_size_mismatch(self):
        """Test that unequal sizes are rejected."""
        with pytest.raises(DomainError):
            match_line_balanced([0.1, 0.2, 0.3], [0.5])


class TestLineExcess:
    """Test the banded line DP with excess supply."""

    def test_single_demand_takes_nearest(self):
        """Test that one demand unit takes the nearest supply."""
        result = match_line_excess([0.0, 0.5, 1.0], [0.49])
        assert result.pairs == [(0, 1)]
        assert result.total_cost == pytest.approx(0.01)
        assert result.unmatched_supply == [0, 2]

    def test_two_demand(self):
        """Test a hand-checked instance with one spare supply unit."""
        result = match_line_excess([0.0, 0.1, 0.9], [0.05, 0.95])
        assert result.total_cost == pytest.approx(0.10)

    def test_no_excess_equals_balanced(self):
        """Test that M = 0 reduces to rank matching."""
        rng = np.random.default_rng(3)
        supply = rng.random(40).tolist()
        demand = rng.random(40).tolist()
        assert match_line_excess(supply, demand).total_cost == pytest.approx(
            match_line_balanced(supply, demand).total_cost, abs=1e-12
        )

    def test_matches_assignment_solver(self):
        """Test optimality against scipy on random rectangular instances."""
        rng = np.random.default_rng(11)
        for _ in range(30):
            n = int(rng.integers(1, 30))
            extra = int(rng.integers(0, 10))
            supply = rng.random(n + extra)
            demand = rng.random(n)
            costs = np.abs(demand[:, None] - supply[None, :])
            rows, cols = linear_sum_assignment(costs)
            expected = costs[rows, cols].sum()
            assert match_line_excess(supply.tolist(), demand.tolist()).total_cost == pytest.approx(expected, abs=1e-9)

    def test_not_enough_supply(self):
        """Test that fewer supply than demand points is rejected."""
        with pytest.raises(DomainError):
            match_line_excess([0.1], [0.2, 0.3])


class TestExactFlow:
    """Test the exact assignment solver."""

    def test_identity(self):
        """Test that coinciding demand and supply cost nothing."""
        points = [(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)]
        result = match_exact_flow(points, points)
        assert result.total_cost == pytest.approx(0.0, abs=1e-12)

    def test_single_demand_picks_nearest(self):
        """Test the degenerate one-row assignment."""
        supply = [(0.0, 0.0), (0.4, 0.4), (1.0, 1.0)]
        result = match_exact_flow(supply, [(0.5, 0.5)])
        assert result.pairs == [(0, 1)]

    def test_matches_scipy(self):
        """Test optimal cost against scipy for d = 2 and 3."""
        rng = np.random.default_rng(5)
        for d in (2, 3):
            for _ in range(10):
                n = int(rng.integers(1, 25))
                extra = int(rng.integers(0, 8))
                supply = rng.random((n + extra, d))
                demand = rng.random((n, d))
                costs = cost_matrix(demand, supply)
                rows, cols = linear_sum_assignment(costs)
                result = match_exact_flow(supply.tolist(), demand.tolist())
                assert result.total_cost == pytest.approx(costs[rows, cols].sum(), abs=1e-9)
                assert len(result.unmatched_supply) == extra

    def test_cap(self):
        """Test the demand size cap."""
        points = [(0.5, 0.5)] * 5
        with pytest.raises(CapacityExceededError):
            match_exact_flow(points, points, cap=4)


class TestBruteForce:
    """Test the exhaustive oracle."""

    def test_agrees_with_exact_solvers(self):
        """Test agreement of all oracles on small random instances."""
        rng = np.random.default_rng(17)
        for _ in range(60):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(1, 7))
            extra = int(rng.integers(0, 4))
            supply = [tuple(p) for p in rng.random((n + extra, d)).tolist()]
            demand = [tuple(p) for p in rng.random((n, d)).tolist()]
            brute = brute_force_match(supply, demand).total_cost
            assert match_exact_flow(supply, demand).total_cost == pytest.approx(brute, abs=1e-9)
            if d == 1:
                line = match_line_excess([p[0] for p in supply], [p[0] for p in demand]).total_cost
                assert line == pytest.approx(brute, abs=1e-9)

    def test_limits(self):
        """Test the size limits."""
        with pytest.raises(CapacityExceededError):
            brute_force_match([(0.1,)] * 12, [(0.1,)] * 2)
        with pytest.raises(CapacityExceededError):
            brute_force_match([(0.1,)] * 9, [(0.1,)] * 9)


class TestOptimalCostProperties:
    """Test properties every optimal matching cost must have."""

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_more_supply_never_costs_more(self, d):
        """Test that adding supply points never raises the optimal cost."""
        rng = np.random.default_rng(31 + d)
        for _ in range(8):
            n = int(rng.integers(1, 20))
            demand = rng.random((n, d)).tolist()
            supply = rng.random((n + 12, d)).tolist()
            costs = [match_exact_flow(supply[:n + extra], demand).total_cost for extra in range(13)]
            assert all(later <= earlier + 1e-9 for earlier, later in zip(costs, costs[1:]))
            if d == 1:
                line = [
                    match_line_excess([p[0] for p in supply[:n + extra]], [p[0] for p in demand]).total_cost
                    for extra in range(13)
                ]
                assert line == pytest.approx(costs, abs=1e-9)

    @pytest.mark.parametrize("d", [1, 2])
    def test_input_order_does_not_matter(self, d):
        """Test that permuting demand or supply leaves the cost unchanged."""
        rng = np.random.default_rng(41 + d)
        for _ in range(10):
            n = int(rng.integers(2, 25))
            demand = rng.random((n, d))
            supply = rng.random((n + int(rng.integers(0, 6)), d))
            base = match_exact_flow(supply.tolist(), demand.tolist()).total_cost
            shuffled_demand = demand[rng.permutation(len(demand))].tolist()
            shuffled_supply = supply[rng.permutation(len(supply))].tolist()
            assert match_exact_flow(shuffled_supply, demand.tolist()).total_cost == pytest.approx(base, abs=1e-9)
            assert match_exact_flow(supply.tolist(), shuffled_demand).total_cost == pytest.approx(base, abs=1e-9)
            if d == 1:
                line = match_line_excess([p[0] for p in shuffled_supply], [p[0] for p in shuffled_demand])
                assert line.total_cost == pytest.approx(base, abs=1e-9)

    def test_balanced_line_order_does_not_matter(self):
        """Test the sort-rank solver under shuffled input."""
        rng = np.random.default_rng(43)
        supply, demand = rng.random(50), rng.random(50)
        base = match_line_balanced(supply.tolist(), demand.tolist()).total_cost
        shuffled = match_line_balanced(rng.permutation(supply).tolist(), rng.permutation(demand).tolist())
        assert shuffled.total_cost == pytest.approx(base, abs=1e-12)


class TestAugmentingPaths:
    """Test the assignment kernel on arbitrary cost matrices."""

    @pytest.mark.parametrize("seed", range(5))
    def test_agrees_with_linear_sum_assignment(self, seed):
        """Test optimal totals and the optimality certificate on rectangular matrices."""
        rng = np.random.default_rng(seed)
        for _ in range(20):
            rows = int(rng.integers(1, 30))
            cols = rows + int(rng.integers(0, 15))
            if rng.random() < 0.5:
                # small integers produce many ties
                cost = rng.integers(0, 5, size=(rows, cols)).astype(float)
            else:
                cost = rng.exponential(size=(rows, cols))
            owner, u, v = _shortest_augmenting_paths(cost)
            _certify(cost, owner, u, v)
            matched = [(int(owner[j]) - 1, j - 1) for j in range(1, cols + 1) if owner[j] != 0]
            assert sorted(i for i, _ in matched) == list(range(rows))
            expected_rows, expected_cols = linear_sum_assignment(cost)
            total = sum(cost[i, j] for i, j in matched)
            assert total == pytest.approx(cost[expected_rows, expected_cols].sum(), abs=1e-9)
