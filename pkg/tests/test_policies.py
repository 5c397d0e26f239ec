import math

import numpy as np
import pytest

from spatial_match import (
    BoundaryMonitor,
    GammaSchedule,
    HypercubeId,
    InvariantViolationError,
    LeafChoice,
    ScheduleError,
    SupplyExhaustedError,
    SupplyTree,
    build_hierarchy,
    gamma_schedule_fully_dynamic,
    gamma_schedule_zero,
    greedy_match,
    hg_insert_supply,
    hg_match,
    leaf_of,
    validate_schedule,
)
from spatial_match.policies import density_slack_scale, fully_dynamic_ell0, steady_state_beta
from spatial_match.rng import even_grid


def line_tree(points, ell0=1):
    return SupplyTree(build_hierarchy(1, ell0), [(x,) for x in points])


class TestSchedules:
    """Test threshold schedule generation."""

    def test_zero_schedule(self):
        """Test the all-zero schedule."""
        assert gamma_schedule_zero(3).gammas == [0.0, 0.0, 0.0, 0.0]

    def test_line_schedule(self):
        """Test d=1, m=16 against the closed form."""
        schedule = gamma_schedule_fully_dynamic(1, 16)
        assert schedule.ell0 == 1
        assert schedule.beta == 2.0
        assert schedule.gammas == pytest.approx([6.0, 14.0])
        assert schedule.gammas[0] <= schedule.gammas[1] / 2

    def test_square_schedule(self):
        """Test d=2, m=1024 and the slack beta^l between levels."""
        schedule = gamma_schedule_fully_dynamic(2, 1024)
        assert schedule.ell0 == 4
        assert schedule.gammas[4] == pytest.approx(1024 - 2.01 ** 4)
        for level, (gamma, eta) in enumerate(zip(schedule.gammas, schedule.etas)):
            assert eta - gamma == pytest.approx(2.01 ** level)

    def test_ell0_rules(self):
        """Test the tree height for the fully dynamic model."""
        assert fully_dynamic_ell0(1, 16) == 1
        assert fully_dynamic_ell0(1, 64) == 3
        assert fully_dynamic_ell0(2, 1024) == 4
        assert fully_dynamic_ell0(2, 2) == 0


    def test_steady_state_beta(self):
        """Test the long-horizon slack growth rate."""
        assert steady_state_beta(1) == 2.0
        assert steady_state_beta(2) == pytest.approx(2.7)
        assert steady_state_beta(3) == pytest.approx(5.4)

    def test_density_slack_scale(self):
        """Test the slack factor between tree-height steps."""
        assert fully_dynamic_ell0(2, 128) == 2
        assert density_slack_scale(2, 128, 2) == pytest.approx(math.sqrt(2))
        assert density_slack_scale(2, 64, 2) == 1.0
        assert density_slack_scale(2, 8, 0) == pytest.approx(math.sqrt(2))

    def test_scaled_slack(self):
        """Test that a slack scale multiplies every gap between levels."""
        beta = steady_state_beta(2)
        scale = density_slack_scale(2, 8192, fully_dynamic_ell0(2, 8192))
        assert scale == pytest.approx(math.sqrt(2))
        schedule = gamma_schedule_fully_dynamic(2, 8192, beta=beta, slack_scale=scale)
        assert schedule.slack_scale == pytest.approx(scale)
        for level, (gamma, eta) in enumerate(zip(schedule.gammas, schedule.etas)):
            assert eta - gamma == pytest.approx(scale * beta ** level)
        assert min(schedule.gammas) >= 0

    def test_slack_scale_below_one_rejected(self):
        """Test that slack cannot shrink below the base schedule."""
        with pytest.raises(ScheduleError):
            gamma_schedule_fully_dynamic(2, 1024, slack_scale=0.5)
    def test_negative_gamma_rejected(self):
        """Test that a slack too large for m is refused."""
        with pytest.raises(ScheduleError) as exc_info:
            gamma_schedule_fully_dynamic(1, 16, beta=20.0)
        assert exc_info.value.level is not None

    def test_validate_schedule(self):
        """Test the input constraints on hand-written schedules."""
        validate_schedule(GammaSchedule(d=1, gammas=[6.0, 14.0]), total_supply=16)
        with pytest.raises(ScheduleError):
            validate_schedule(GammaSchedule(d=1, gammas=[1.0, 0.0]))
        with pytest.raises(ScheduleError):
            validate_schedule(GammaSchedule(d=1, gammas=[0.0, 16.0]), total_supply=16)


class TestSupplyTree:
    """Test the per-cell supply counts."""

    def test_parent_sums_after_random_inserts(self):
        """Test the parent-sum invariant after many inserts."""
        rng = np.random.default_rng(2)
        tree = SupplyTree(build_hierarchy(2, 4))
        for point in rng.random((10_000, 2)).tolist():
            hg_insert_supply(tree, tuple(point))
        tree.check_consistency()
        assert tree.total == 10_000
        for level in range(1, 5):
            assert sum(tree.counts[level]) == 10_000

    def test_remove(self):
        """Test that removal updates every ancestor."""
        tree = line_tree([0.1, 0.2, 0.7])
        point = tree.remove(0, 0)
        assert point == (0.1,)
        assert tree.counts[0] == [1, 1]
        assert tree.total == 2
        tree.check_consistency()


class TestHierarchicalGreedy:
    """Test hg_match against hand traces."""

    def test_match_inside_leaf(self):
        """Test that a supplied leaf serves its own demand at level 0."""
        tree = line_tree([0.1, 0.6])
        decision = hg_match(tree, gamma_schedule_zero(1), (0.55,))
        assert decision.supply_point == (0.6,)
        assert decision.level == 0
        assert decision.distance == pytest.approx(0.05)

    def test_only_supplied_descendant(self):
        """Test that an empty leaf sends the walk to its sibling."""
        tree = line_tree([0.6, 0.7, 0.8])
        decision = hg_match(tree, gamma_schedule_zero(1), (0.2,))
        assert decision.policy_level == 1
        assert decision.level == 1
        assert decision.supply_key == 1
        assert decision.supply_point == (0.6,)

    def test_protected_leaf(self):
        """Test that a leaf at its threshold is skipped in favour of the best child."""
        tree = line_tree([0.1, 0.6, 0.7, 0.8])
        schedule = GammaSchedule(d=1, gammas=[1.0, 0.0])
        decision = hg_match(tree, schedule, (0.2,))
        assert decision.policy_level == 1
        assert decision.supply_key == 1
        assert tree.counts[0] == [1, 2]

    def test_lowest_child_on_ties(self):
        """Test the tie-break of the descent."""
        tree = SupplyTree(build_hierarchy(1, 2), [(0.9,), (0.6,)])
        decision = hg_match(tree, gamma_schedule_zero(2), (0.1,))
        assert decision.policy_level == 2
        assert decision.supply_key == 2
        assert decision.supply_point == (0.6,)

    def test_leaf_choice(self):
        """Test nearest versus last-inserted choice inside a leaf."""
        points = [0.05, 0.45, 0.2]
        nearest = hg_match(line_tree(points), gamma_schedule_zero(1), (0.4,))
        last = hg_match(line_tree(points), gamma_schedule_zero(1), (0.4,), LeafChoice.LAST_INSERTED)
        assert nearest.supply_point == (0.45,)
        assert last.supply_point == (0.2,)

    def test_collocated_pair(self):
        """Test that a supply unit at the demand location is used at distance 0."""
        tree = line_tree([0.3, 0.9])
        hg_insert_supply(tree, (0.25,))
        decision = hg_match(tree, gamma_schedule_zero(1), (0.25,))
        assert decision.distance == 0.0

    def test_exhausted(self):
        """Test that an undersupplied root raises."""
        with pytest.raises(SupplyExhaustedError):
            hg_match(line_tree([]), gamma_schedule_zero(1), (0.5,))
        with pytest.raises(SupplyExhaustedError):
            hg_match(line_tree([0.1, 0.2]), GammaSchedule(d=1, gammas=[0.0, 2.0]), (0.5,))

    def test_schedule_must_fit(self):
        """Test that a schedule for another hierarchy is refused."""
        with pytest.raises(ScheduleError):
            hg_match(line_tree([0.1]), gamma_schedule_zero(3), (0.5,))

    def test_decision_cells(self):
        """Test that decisions report their leaves as HypercubeIds."""
        rng = np.random.default_rng(11)
        hierarchy = build_hierarchy(2, 3)
        tree = SupplyTree(hierarchy, [tuple(p) for p in rng.random((40, 2))])
        for demand in rng.random((20, 2)):
            decision = hg_match(tree, gamma_schedule_zero(3, d=2), tuple(demand))
            assert isinstance(decision.supply_cell, HypercubeId)
            assert decision.supply_cell == hierarchy.decode(0, decision.supply_key)
            assert decision.supply_cell.level == 0
            assert hierarchy.contains(decision.supply_cell, decision.supply_point)
            assert decision.demand_cell == leaf_of(hierarchy, tuple(demand))

    @pytest.mark.parametrize("policy", ["hg", "greedy"])
    def test_distance_within_shared_cell(self, policy):
        """Test that every match distance is at most the diameter of the shared cell."""
        rng = np.random.default_rng(23)
        hierarchy = build_hierarchy(2, 3)
        tree = SupplyTree(hierarchy, [tuple(p) for p in rng.random((200, 2))])
        for demand in rng.random((150, 2)):
            point = tuple(demand)
            if policy == "hg":
                decision = hg_match(tree, gamma_schedule_zero(3, d=2), point)
            else:
                decision = greedy_match(tree, point)
            assert decision.distance <= hierarchy.diameter(decision.level) + 1e-12
            assert decision.distance <= hierarchy.diameter(hierarchy.ell0) + 1e-12


class TestGreedy:
    """Test nearest-available matching."""

    def test_single_supply(self):
        """Test that the only supply unit is always chosen."""
        tree = SupplyTree(build_hierarchy(2, 2), [(0.9, 0.9)])
        decision = greedy_match(tree, (0.0, 0.0))
        assert decision.supply_point == (0.9, 0.9)
        assert tree.total == 0

    def test_exact_nearest(self):
        """Test against a brute-force nearest neighbour."""
        rng = np.random.default_rng(9)
        supply = [tuple(p) for p in rng.random((200, 2)).tolist()]
        tree = SupplyTree(build_hierarchy(2, 3), supply)
        for demand in rng.random((50, 2)).tolist():
            remaining = tree.points()
            expected = min(math.dist(demand, p) for p in remaining)
            decision = greedy_match(tree, tuple(demand))
            assert decision.distance == pytest.approx(expected)

    def test_empty(self):
        """Test that an empty state raises."""
        with pytest.raises(SupplyExhaustedError):
            greedy_match(SupplyTree(build_hierarchy(1, 1)), (0.5,))


class TestBoundaryMonitor:
    """Test the debug-mode invariant checks."""

    def setup_tree(self):
        schedule = gamma_schedule_fully_dynamic(1, 16)
        tree = SupplyTree(build_hierarchy(1, schedule.ell0), even_grid(1, 16))
        return tree, schedule

    def test_initial_transients(self):
        """Test that evenly spread supply starts at or above every boundary."""
        tree, schedule = self.setup_tree()
        monitor = BoundaryMonitor(tree, schedule)
        assert monitor.unreached == 0
        assert monitor.transient == 1

    def test_boundary_violation_counted(self):
        """Test that a count dropping below its reached boundary is reported."""
        tree, schedule = self.setup_tree()
        monitor = BoundaryMonitor(tree, schedule)
        for _ in range(3):
            tree.remove(0, 0)
        monitor.start_period(2, [0])
        # leaf 0 holds 5 < 6 and the root 13 < 14
        assert monitor.violations == 2

    def test_strict_raises(self):
        """Test that strict mode raises on the first violation."""
        tree, schedule = self.setup_tree()
        monitor = BoundaryMonitor(tree, schedule, strict=True)
        for _ in range(3):
            tree.remove(0, 0)
        with pytest.raises(InvariantViolationError) as exc_info:
            monitor.start_period(2, [0])
        assert exc_info.value.kind == "boundary"
        assert exc_info.value.level == 0

    def test_hg_respects_boundaries(self):
        """Test that Hierarchical Greedy never trips the monitor."""
        schedule = gamma_schedule_fully_dynamic(1, 16)
        tree = SupplyTree(build_hierarchy(1, schedule.ell0), even_grid(1, 16))
        monitor = BoundaryMonitor(tree, schedule)
        rng = np.random.default_rng(4)
        for period in range(1, 2001):
            decision = hg_match(tree, schedule, (float(rng.random()),))
            monitor.after_match(period, decision)
            arrived = hg_insert_supply(tree, (float(rng.random()),))
            monitor.start_period(period + 1, [decision.supply_key, arrived])
        assert monitor.violations == 0
