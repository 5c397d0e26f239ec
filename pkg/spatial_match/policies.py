"""
Matching policies over a hierarchical supply state.

``hg_match`` is Hierarchical Greedy: protect every undersupplied ancestor of
the demand's leaf, start from the lowest ancestor above all of them, and
walk down to a leaf by repeatedly entering the best-supplied child.
``greedy_match`` is the nearest-available baseline.
"""

import heapq
import math
from typing import Dict, List, Optional, Sequence

from .errors import DomainError, InvariantViolationError, ScheduleError, SupplyExhaustedError
from .geometry import Hierarchy, Point, distance_fn
from .models import GammaSchedule, HypercubeId, LeafChoice, Norm
from .observability import InvariantViolationEvent, ObservabilityHook

FULLY_DYNAMIC_BETA_MULTI_D = 2.01
FULLY_DYNAMIC_BETA_LINE = 2.0
STEADY_STATE_BETA_FRACTION = 0.9


class MatchDecision:
    """
    The supply unit chosen for one demand unit.

    ``demand_key`` and ``supply_key`` are interleaved leaf keys of the
    hierarchy; ``demand_cell`` and ``supply_cell`` give the same leaves as
    HypercubeIds.
    """

    __slots__ = ("supply_point", "demand_key", "supply_key", "level", "policy_level", "distance", "hierarchy")

    def __init__(
        self,
        supply_point: Point,
        demand_key: int,
        supply_key: int,
        level: int,
        policy_level: int,
        distance: float,
        hierarchy: Hierarchy
    ):
        self.supply_point = supply_point
        self.demand_key = demand_key
        self.supply_key = supply_key
        # lowest level whose cell holds both demand and supply
        self.level = level
        # level Hierarchical Greedy started its descent from
        self.policy_level = policy_level
        self.distance = distance
        self.hierarchy = hierarchy

    @property
    def demand_cell(self) -> HypercubeId:
        return self.hierarchy.decode(0, self.demand_key)

    @property
    def supply_cell(self) -> HypercubeId:
        return self.hierarchy.decode(0, self.supply_key)

    def __repr__(self) -> str:
        return (
            f"MatchDecision(level={self.level}, policy_level={self.policy_level}, "
            f"distance={self.distance:.6g}, supply_cell={self.supply_cell.index})"
        )


class SupplyTree:
    """
    Per-cell supply counts n_h(t) for every level, plus the supply points of each leaf.

    Counts are kept in one list per level indexed by interleaved cell key, so a
    parent always equals the sum of its 2^d children. Single writer.
    """

    def __init__(self, hierarchy: Hierarchy, points: Sequence[Point] = (), norm: Norm = Norm.EUCLIDEAN):
        self.hierarchy = hierarchy
        self.norm = Norm(norm)
        self._distance = distance_fn(self.norm)
        self.counts: List[List[int]] = [[0] * hierarchy.cells_at(level) for level in range(hierarchy.ell0 + 1)]
        self.leaf_points: Dict[int, List[Point]] = {}
        for point in points:
            self.insert(point)

    @property
    def total(self) -> int:
        """Supply units currently in the system (root count)."""
        return self.counts[-1][0]

    def count(self, level: int, key: int) -> int:
        """n_h for the level-``level`` cell with interleaved ``key``."""
        return self.counts[level][key]

    def insert(self, point: Point) -> int:
        """Add a supply point; returns its leaf key."""
        leaf = self.hierarchy.leaf_key(point)
        self.leaf_points.setdefault(leaf, []).append(point)
        d = self.hierarchy.d
        for level, row in enumerate(self.counts):
            row[leaf >> (d * level)] += 1
        return leaf

    def remove(self, leaf: int, index: int) -> Point:
        """Remove the ``index``-th point of a leaf and decrement its ancestors."""
        points = self.leaf_points[leaf]
        point = points.pop(index)
        if not points:
            del self.leaf_points[leaf]
        d = self.hierarchy.d
        for level, row in enumerate(self.counts):
            row[leaf >> (d * level)] -= 1
        return point

    def points(self) -> List[Point]:
        """All supply points, leaf by leaf."""
        return [p for leaf in sorted(self.leaf_points) for p in self.leaf_points[leaf]]

    def check_consistency(self) -> None:
        """
        Verify the parent-sum and leaf-length invariants.

        Raises:
            InvariantViolationError: On the first inconsistent cell
        """
        fanout = self.hierarchy.fanout
        leaves = self.counts[0]
        for key, n in enumerate(leaves):
            if n != len(self.leaf_points.get(key, ())) or n < 0:
                raise InvariantViolationError(f"leaf {key} count {n} disagrees with its points", kind="leaf_count", level=0, key=key)
        for level in range(1, len(self.counts)):
            below = self.counts[level - 1]
            for key, n in enumerate(self.counts[level]):
                if n != sum(below[key * fanout:(key + 1) * fanout]):
                    raise InvariantViolationError(f"cell {key} at level {level} is not the sum of its children", kind="parent_sum", level=level, key=key)

    def _pick_in_leaf(self, leaf: int, demand: Point, choice: LeafChoice) -> int:
        points = self.leaf_points[leaf]
        if choice == LeafChoice.LAST_INSERTED:
            return len(points) - 1
        dist = self._distance
        best, best_dist = 0, dist(demand, points[0])
        for i in range(1, len(points)):
            value = dist(demand, points[i])
            if value < best_dist:
                best, best_dist = i, value
        return best


def gamma_schedule_zero(ell0: int, d: int = 1) -> GammaSchedule:
    """All thresholds zero: the schedule used in the semi-dynamic model."""
    if ell0 < 0:
        raise DomainError(f"ell0 must be >= 0, got {ell0}")
    return GammaSchedule(d=d, gammas=[0.0] * (ell0 + 1))


def default_beta(d: int) -> float:
    """Slack growth rate: 2 on the line, 2.01 in higher dimensions."""
    return FULLY_DYNAMIC_BETA_LINE if d == 1 else FULLY_DYNAMIC_BETA_MULTI_D


def steady_state_beta(d: int) -> float:
    """
    Slack growth rate for long-horizon runs.

    Any beta in (2, 3/4 2^d) keeps the thresholds non-negative for d >= 2;
    this picks 9/10 of the upper end, so per-level costs decay by 2/beta.
    The line has no such range and keeps beta = 2.
    """
    if d == 1:
        return FULLY_DYNAMIC_BETA_LINE
    return STEADY_STATE_BETA_FRACTION * 0.75 * 2.0 ** d


def fully_dynamic_ell0(d: int, m: int) -> int:
    """
    Tree height for the fully dynamic model with ``m`` free supply units.

    d >= 2: largest ell0 with 2^(d*ell0) <= m/4.
    d == 1: largest ell0 with 2^ell0 <= m / (1 + log2 m).
    Never below 0.
    """
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    limit = _leaf_budget(d, m)
    ell0 = 0
    while 2.0 ** (d * (ell0 + 1)) <= limit:
        ell0 += 1
    return ell0


def _leaf_budget(d: int, m: int) -> float:
    return m / 4.0 if d >= 2 else m / (1.0 + math.log2(m))


def density_slack_scale(d: int, m: int, ell0: int) -> float:
    """
    Square root of the supply per leaf over its minimum, never below 1.

    ell0 only changes when m crosses a power of 2^d, so between steps the
    extra supply per leaf grows up to 2^d-fold. Scaling every slack by this
    factor keeps the lower-boundary occupancy, and with it the cost, smooth in m.
    """
    return max(1.0, math.sqrt(_leaf_budget(d, m) / 2.0 ** (d * ell0)))


def gamma_schedule_fully_dynamic(
    d: int,
    m: int,
    ell0: Optional[int] = None,
    beta: Optional[float] = None,
    slack_scale: float = 1.0
) -> GammaSchedule:
    """
    Thresholds with slack beta^l between consecutive levels.

    gamma_l = m 2^-((ell0-l)d) - s sum_{l'=l..ell0} beta^l' 2^-(d(l'-l)), which
    gives gamma_{l+1} 2^-d - gamma_l = s beta^l exactly. The slack scale s is
    1 unless given, e.g. by ``density_slack_scale``.

    Args:
        d: Dimension
        m: Free supply maintained in the system
        ell0: Tree height; defaults to ``fully_dynamic_ell0(d, m)``
        beta: Slack growth rate; defaults to ``default_beta(d)``
        slack_scale: Factor s >= 1 on every slack

    Raises:
        ScheduleError: If some gamma_l is negative (m too small for ell0 and beta)
    """
    if ell0 is None:
        ell0 = fully_dynamic_ell0(d, m)
    if beta is None:
        beta = default_beta(d)
    if slack_scale < 1.0:
        raise ScheduleError(f"slack scale must be >= 1, got {slack_scale}", value=slack_scale)
    gammas = []
    for level in range(ell0 + 1):
        slack = sum(beta ** upper * 2.0 ** (-d * (upper - level)) for upper in range(level, ell0 + 1))
        gammas.append(m * 2.0 ** (-(ell0 - level) * d) - slack_scale * slack)
    for level, gamma in enumerate(gammas):
        if gamma < 0:
            raise ScheduleError(
                f"gamma_{level} = {gamma:.6g} < 0: m={m} too small for ell0={ell0}, beta={beta}",
                level=level,
                value=gamma,
            )
    schedule = GammaSchedule(d=d, gammas=gammas, beta=beta, slack_scale=slack_scale)
    validate_schedule(schedule, total_supply=m)
    return schedule


def validate_schedule(schedule: GammaSchedule, total_supply: Optional[int] = None) -> None:
    """
    Check the algorithm's input constraints on a schedule.

    gamma_ell0 in [0, total supply) and gamma_l in [0, 2^-d gamma_{l+1}] for l < ell0.

    Raises:
        ScheduleError: On the first violated constraint
    """
    gammas = schedule.gammas
    top = schedule.ell0
    if total_supply is not None and not 0 <= gammas[top] < total_supply:
        raise ScheduleError(f"root threshold {gammas[top]} outside [0, {total_supply})", level=top, value=gammas[top])
    scale = 2.0 ** -schedule.d
    for level in range(top):
        limit = scale * gammas[level + 1]
        tol = 1e-9 * max(1.0, abs(limit))
        if gammas[level] < 0 or gammas[level] > limit + tol:
            raise ScheduleError(
                f"gamma_{level} = {gammas[level]} outside [0, {limit}]",
                level=level,
                value=gammas[level],
            )


def hg_match(
    state: SupplyTree,
    schedule: GammaSchedule,
    demand: Point,
    tiebreak: LeafChoice = LeafChoice.NEAREST
) -> MatchDecision:
    """
    Match one demand unit with Hierarchical Greedy and remove the chosen supply.

    Undersupplied ancestors are the levels l with n_{A_l} <= gamma_l. The
    match level is one above the highest of them (0 if none). From that
    ancestor the walk enters the child with the largest count at each step
    (lowest child index on ties) until it reaches a leaf, then takes a supply
    point in that leaf: the one nearest the demand, or the most recently
    inserted one.

    Raises:
        ScheduleError: If the schedule does not fit the state's hierarchy
        SupplyExhaustedError: If even the root is undersupplied
    """
    hierarchy = state.hierarchy
    gammas = schedule.gammas
    ell0 = hierarchy.ell0
    if len(gammas) != ell0 + 1 or schedule.d != hierarchy.d:
        raise ScheduleError(f"schedule for d={schedule.d}, ell0={schedule.ell0} does not fit {hierarchy!r}")
    d = hierarchy.d
    counts = state.counts
    leaf = hierarchy.leaf_key(demand)

    start = 0
    for level in range(ell0 + 1):
        if counts[level][leaf >> (d * level)] <= gammas[level]:
            start = level + 1
    if start > ell0:
        raise SupplyExhaustedError(f"root holds {state.total} supply units, not above gamma_{ell0} = {gammas[ell0]}")

    key = leaf >> (d * start)
    fanout = hierarchy.fanout
    for level in range(start, 0, -1):
        row = counts[level - 1]
        base = key << d
        key, best = base, row[base]
        for child in range(base + 1, base + fanout):
            if row[child] > best:
                key, best = child, row[child]

    index = state._pick_in_leaf(key, demand, LeafChoice(tiebreak))
    supply = state.remove(key, index)
    return MatchDecision(
        supply_point=supply,
        demand_key=leaf,
        supply_key=key,
        level=hierarchy.shared_level(leaf, key),
        policy_level=start,
        distance=state._distance(demand, supply),
        hierarchy=hierarchy,
    )


def hg_insert_supply(state: SupplyTree, point: Point) -> int:
    """Add an arriving supply unit to its leaf and all ancestors; returns the leaf key."""
    return state.insert(point)


def greedy_match(state: SupplyTree, demand: Point) -> MatchDecision:
    """
    Match a demand unit to the globally nearest supply unit and remove it.

    Best-first search over the hierarchy: cells are expanded in order of their
    distance to the demand and skipped when empty, so the first supply point
    popped is the exact nearest one.

    Raises:
        SupplyExhaustedError: If the state holds no supply
    """
    if state.total <= 0:
        raise SupplyExhaustedError("no supply available for greedy matching")
    hierarchy = state.hierarchy
    d = hierarchy.d
    counts = state.counts
    norm = state.norm
    dist = state._distance
    leaf = hierarchy.leaf_key(demand)

    # entries: (bound, order, level, key, point index); index -1 marks a cell
    heap = [(0.0, 0, hierarchy.ell0, 0, -1)]
    order = 1
    while heap:
        bound, _, level, key, index = heapq.heappop(heap)
        if index >= 0:
            supply = state.remove(key, index)
            return MatchDecision(
                supply_point=supply,
                demand_key=leaf,
                supply_key=key,
                level=hierarchy.shared_level(leaf, key),
                policy_level=hierarchy.shared_level(leaf, key),
                distance=bound,
                hierarchy=hierarchy,
            )
        if level == 0:
            for i, point in enumerate(state.leaf_points.get(key, ())):
                heapq.heappush(heap, (dist(demand, point), order, 0, key, i))
                order += 1
            continue
        row = counts[level - 1]
        for child in hierarchy.child_keys(key):
            if row[child] > 0:
                gap = hierarchy.gap_to_cell(demand, level - 1, child, norm)
                heapq.heappush(heap, (gap, order, level - 1, child, -1))
                order += 1
    raise SupplyExhaustedError("supply counts and leaf points disagree")


class BoundaryMonitor:
    """
    Debug-mode checks of Hierarchical Greedy's guarantees.

    * Boundary respect: once n_h reaches floor(gamma_l) at the start of a
      period (period T_h), it stays at or above it at every later period start.
    * No outside use: a cell h at level l < ell0 gives a supply unit to a
      demand outside h only while n_h >= ceil(eta_l).

    T_h is tracked for every cell; ``transient`` is the largest one observed.
    """

    def __init__(
        self,
        state: SupplyTree,
        schedule: GammaSchedule,
        hook: Optional[ObservabilityHook] = None,
        run_id: str = "",
        strict: bool = False,
        check: bool = True
    ):
        self.state = state
        self.hook = hook
        self.run_id = run_id
        self.strict = strict
        self.check = check
        self.floors = schedule.lower_bounds
        self.eta_ceilings = [math.ceil(eta) for eta in schedule.etas]
        self.violations = 0
        self.reached_at: List[List[int]] = []
        for level, row in enumerate(state.counts):
            floor = self.floors[level]
            self.reached_at.append([1 if n >= floor else 0 for n in row])

    def _violation(self, kind: str, period: int, level: int, key: int, observed: float, bound: float) -> None:
        self.violations += 1
        if self.hook is not None:
            self.hook.on_invariant_violation(
                InvariantViolationEvent(self.run_id, kind, period, level, key, observed, bound)
            )
        if self.strict:
            raise InvariantViolationError(
                f"{kind} violated at period {period}, level {level}, cell {key}: {observed} vs {bound}",
                kind=kind,
                level=level,
                key=key,
                period=period,
            )

    def after_match(self, period: int, decision: MatchDecision) -> None:
        """Check no outside use for the supply path of a match just applied."""
        if not self.check:
            return
        d = self.state.hierarchy.d
        counts = self.state.counts
        top = min(decision.level, len(self.eta_ceilings))
        for level in range(top):
            key = decision.supply_key >> (d * level)
            before = counts[level][key] + 1
            if before < self.eta_ceilings[level]:
                self._violation("outside_use", period, level, key, before, self.eta_ceilings[level])

    def start_period(self, period: int, leaves: Sequence[int]) -> None:
        """Update T_h and check boundary respect on the cells above ``leaves``."""
        d = self.state.hierarchy.d
        counts = self.state.counts
        for leaf in leaves:
            for level, row in enumerate(counts):
                key = leaf >> (d * level)
                n = row[key]
                floor = self.floors[level]
                if self.reached_at[level][key]:
                    if self.check and n < floor:
                        self._violation("boundary", period, level, key, n, floor)
                elif n >= floor:
                    self.reached_at[level][key] = period

    @property
    def unreached(self) -> int:
        """Cells that never reached their lower boundary."""
        return sum(row.count(0) for row in self.reached_at)

    @property
    def transient(self) -> Optional[int]:
        """Largest observed T_h over cells that reached their boundary."""
        best = 0
        for row in self.reached_at:
            if row:
                best = max(best, max(row))
        return best or None
