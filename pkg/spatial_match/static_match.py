"""
Exact minimum-cost matching oracles for the static model.

All oracles match every demand unit to a distinct supply unit and leave the
excess supply unmatched. They agree with each other exactly on small
instances and are used both as benchmarks and as test oracles.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import CapacityExceededError, DomainError, InvariantViolationError
from .models import MatchingResult, Norm

DEFAULT_EXACT_CAP = 4096
BRUTE_FORCE_DEMAND_CAP = 8
BRUTE_FORCE_SUPPLY_CAP = 11

CDIST_METRICS = {
    Norm.EUCLIDEAN: "euclidean",
    Norm.L1: "cityblock",
    Norm.LINF: "chebyshev",
}


def cost_matrix(demand: Sequence[Sequence[float]], supply: Sequence[Sequence[float]], norm: Norm = Norm.EUCLIDEAN) -> np.ndarray:
    """Pairwise distances, demand along rows and supply along columns."""
    a = np.asarray(demand, dtype=float)
    b = np.asarray(supply, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch: demand d={a.shape[1]}, supply d={b.shape[1]}")
    return cdist(a, b, metric=CDIST_METRICS[Norm(norm)])


def _line(values: Sequence[float]) -> np.ndarray:
    """Coordinates of points on the line as a flat array."""
    array = np.asarray(values, dtype=float)
    if array.ndim == 2 and array.shape[1] == 1:
        array = array[:, 0]
    if array.ndim != 1:
        raise DomainError(f"line matching needs one coordinate per point, got shape {array.shape}")
    return array


def _result(pairs: List[Tuple[int, int]], costs: np.ndarray, supply_count: int) -> MatchingResult:
    pairs = sorted(pairs)
    total = math.fsum(float(costs[i, j]) for i, j in pairs)
    matched = {j for _, j in pairs}
    return MatchingResult(
        pairs=pairs,
        total_cost=total,
        avg_cost=total / len(pairs),
        unmatched_supply=[j for j in range(supply_count) if j not in matched],
    )


def match_line_balanced(supply: Sequence[float], demand: Sequence[float]) -> MatchingResult:
    """
    Optimal matching on the line when supply and demand have equal size.

    The k-th smallest demand point is matched with the k-th smallest supply point.

    Raises:
        DomainError: If the lists differ in length or are empty
    """
    if len(supply) != len(demand):
        raise DomainError(f"balanced matching needs equal sizes, got {len(supply)} supply and {len(demand)} demand")
    if len(demand) == 0:
        raise DomainError("demand must not be empty")
    s = _line(supply)
    x = _line(demand)
    pairs = sorted(zip(np.argsort(x, kind="stable").tolist(), np.argsort(s, kind="stable").tolist()))
    total = math.fsum(abs(x[i] - s[j]) for i, j in pairs)
    return MatchingResult(pairs=pairs, total_cost=total, avg_cost=total / len(pairs))


def match_line_excess(supply: Sequence[float], demand: Sequence[float]) -> MatchingResult:
    """
    Optimal matching on the line with N demand and N+M supply points.

    Some optimal matching is non-crossing, so in sorted order the i-th demand
    point uses a supply point whose rank lies in [i, i+M]. The table
    ``C[i][k]`` is the best cost of matching the first i demand points inside
    the first i+k supply points, with
    ``C[i][k] = min(C[i][k-1], C[i-1][k] + |x_i - y_{i+k}|)``; each row is a
    running minimum, computed one row at a time.

    Raises:
        DomainError: If there is less supply than demand or no demand
    """
    n = len(demand)
    excess = len(supply) - n
    if excess < 0:
        raise DomainError(f"excess supply must be >= 0, got M={excess}")
    if n == 0:
        raise DomainError("demand must not be empty")
    if excess == 0:
        return match_line_balanced(supply, demand)

    s = _line(supply)
    x = _line(demand)
    s_order = np.argsort(s, kind="stable")
    x_order = np.argsort(x, kind="stable")
    ys = s[s_order]
    xs = x[x_order]

    width = excess + 1
    offsets = np.arange(width)
    prev = np.zeros(width)
    took = np.zeros((n, width), dtype=bool)
    for i in range(n):
        step = prev + np.abs(xs[i] - ys[i + offsets])
        row = np.minimum.accumulate(step)
        shifted = np.empty(width)
        shifted[0] = np.inf
        shifted[1:] = row[:-1]
        took[i] = step <= shifted
        prev = row

    pairs = []
    i, k = n - 1, excess
    while i >= 0:
        if took[i, k]:
            pairs.append((int(x_order[i]), int(s_order[i + k])))
            i -= 1
        else:
            k -= 1
    total = math.fsum(abs(x[a] - s[b]) for a, b in pairs)
    pairs.sort()
    matched = {b for _, b in pairs}
    return MatchingResult(
        pairs=pairs,
        total_cost=total,
        avg_cost=total / n,
        unmatched_supply=[j for j in range(len(s)) if j not in matched],
    )


def _shortest_augmenting_paths(cost: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Successive shortest augmenting paths with node potentials (rows <= columns).

    Returns ``(owner, u, v)`` where ``owner[j]`` is the 1-based row matched to
    column ``j`` (0 when free, index 0 is a virtual column), and ``u``, ``v``
    are the final row and column potentials.
    """
    rows, cols = cost.shape
    u = np.zeros(rows + 1)
    v = np.zeros(cols + 1)
    owner = np.zeros(cols + 1, dtype=np.int64)
    way = np.zeros(cols + 1, dtype=np.int64)

    for i in range(1, rows + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(cols + 1, np.inf)
        used = np.zeros(cols + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            visited = np.flatnonzero(used)
            u[owner[visited]] += delta
            v[visited] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    return owner, u, v


def _certify(cost: np.ndarray, owner: np.ndarray, u: np.ndarray, v: np.ndarray) -> None:
    """Check dual feasibility and complementary slackness of the potentials."""
    tol = 1e-9 * max(1.0, float(cost.max(initial=0.0)))
    reduced = cost - u[1:, None] - v[None, 1:]
    if reduced.min(initial=0.0) < -tol:
        raise InvariantViolationError("negative reduced-cost arc after augmentation", kind="reduced_cost")
    matched_cols = np.flatnonzero(owner[1:])
    if np.any(np.abs(reduced[owner[1:][matched_cols] - 1, matched_cols]) > tol):
        raise InvariantViolationError("matched arc with non-zero reduced cost", kind="reduced_cost")
    free_cols = np.flatnonzero(owner[1:] == 0)
    if np.any(np.abs(v[1:][free_cols]) > tol) or np.any(v[1:] > tol):
        raise InvariantViolationError("column potential violates slackness", kind="reduced_cost")


def match_exact_flow(
    supply: Sequence[Sequence[float]],
    demand: Sequence[Sequence[float]],
    norm: Norm = Norm.EUCLIDEAN,
    cap: int = DEFAULT_EXACT_CAP,
    certify: bool = True
) -> MatchingResult:
    """
    Globally optimal assignment of all demand on the complete bipartite graph.

    Uses successive shortest augmenting paths with potentials (Hungarian
    method, O(N^2 (N+M))). With ``certify`` the final potentials are checked:
    no arc has negative reduced cost, matched arcs are tight and free supply
    carries zero potential.

    Args:
        supply: N+M supply points
        demand: N demand points
        norm: Distance used for costs
        cap: Largest accepted number of demand points
        certify: Whether to check the optimality certificate

    Raises:
        CapacityExceededError: If there are more than ``cap`` demand points
        DomainError: If there is less supply than demand
    """
    n = len(demand)
    if n > cap:
        raise CapacityExceededError(f"{n} demand points exceed the exact solver cap {cap}", limit=cap, requested=n)
    if len(supply) < n:
        raise DomainError(f"need at least as much supply as demand, got {len(supply)} < {n}")
    if n == 0:
        raise DomainError("demand must not be empty")
    costs = cost_matrix(demand, supply, norm)
    owner, u, v = _shortest_augmenting_paths(costs)
    if certify:
        _certify(costs, owner, u, v)
    pairs = [(int(owner[j]) - 1, j - 1) for j in range(1, len(owner)) if owner[j] != 0]
    return _result(pairs, costs, len(supply))


def brute_force_match(
    supply: Sequence[Sequence[float]],
    demand: Sequence[Sequence[float]],
    norm: Norm = Norm.EUCLIDEAN,
    max_demand: int = BRUTE_FORCE_DEMAND_CAP,
    max_supply: int = BRUTE_FORCE_SUPPLY_CAP
) -> MatchingResult:
    """
    Minimum-cost injection of demand into supply by exhaustive search.

    Every injection is visited except branches whose partial cost already
    reaches the best complete one, which cannot improve on it since
    distances are non-negative.

    Raises:
        CapacityExceededError: If either side exceeds its limit
        DomainError: If there is less supply than demand
    """
    n, s = len(demand), len(supply)
    if n > max_demand:
        raise CapacityExceededError(f"{n} demand points exceed brute-force limit {max_demand}", limit=max_demand, requested=n)
    if s > max_supply:
        raise CapacityExceededError(f"{s} supply points exceed brute-force limit {max_supply}", limit=max_supply, requested=s)
    if s < n:
        raise DomainError(f"need at least as much supply as demand, got {s} < {n}")
    if n == 0:
        raise DomainError("demand must not be empty")

    costs = cost_matrix(demand, supply, norm)
    table = costs.tolist()
    best_cost = math.inf
    best: Optional[List[int]] = None
    chosen = [-1] * n
    used = [False] * s

    def visit(i: int, acc: float) -> None:
        nonlocal best_cost, best
        if acc >= best_cost:
            return
        if i == n:
            best_cost = acc
            best = list(chosen)
            return
        row = table[i]
        for j in range(s):
            if not used[j]:
                used[j] = True
                chosen[i] = j
                visit(i + 1, acc + row[j])
                used[j] = False

    visit(0, 0.0)
    return _result(list(enumerate(best)), costs, s)
