"""
Dyadic hypercube hierarchy over the unit cube [0,1]^d.

Cells are addressed publicly by per-axis integer indices (``HypercubeId``).
Internally every cell also has an integer key formed by interleaving the
bits of its axis indices, so that the level-l ancestor of a leaf key is
``key >> (d * l)`` and the children of a key are ``(key << d) + c`` for
``c in range(2**d)``. Child offset ``c`` carries the low bit of axis ``k``
in bit ``k``; "lowest child index" always refers to this ordering.
"""

import math
from typing import Callable, List, Sequence, Tuple

from .errors import CapacityExceededError, DomainError
from .models import HypercubeId, Norm

Point = Tuple[float, ...]
DistanceFn = Callable[[Sequence[float], Sequence[float]], float]

DEFAULT_MAX_NODES = 1 << 26


def _l1(a: Sequence[float], b: Sequence[float]) -> float:
    return sum(abs(x - y) for x, y in zip(a, b))


def _linf(a: Sequence[float], b: Sequence[float]) -> float:
    return max(abs(x - y) for x, y in zip(a, b))


_DISTANCE_FNS = {
    Norm.EUCLIDEAN: math.dist,
    Norm.L1: _l1,
    Norm.LINF: _linf,
}


def distance_fn(norm: Norm = Norm.EUCLIDEAN) -> DistanceFn:
    """Return the unchecked two-point distance function for a norm."""
    return _DISTANCE_FNS[Norm(norm)]


def distance(a: Sequence[float], b: Sequence[float], norm: Norm = Norm.EUCLIDEAN) -> float:
    """
    Distance between two points under the selected norm.

    Args:
        a: First point
        b: Second point
        norm: Euclidean (default), L1 or L-infinity

    Returns:
        The norm of ``a - b``

    Raises:
        DomainError: If the points have different dimensions
    """
    if len(a) != len(b):
        raise DomainError(f"dimension mismatch: {len(a)} != {len(b)}")
    return _DISTANCE_FNS[Norm(norm)](a, b)


def norm_combine(deltas: Sequence[float], norm: Norm) -> float:
    """Combine per-axis gaps into a distance under ``norm``."""
    if norm == Norm.L1:
        return sum(deltas)
    if norm == Norm.LINF:
        return max(deltas) if deltas else 0.0
    return math.sqrt(sum(x * x for x in deltas))


class Hierarchy:
    """
    The 2^d-ary tree of nested dyadic partitions H_0 (leaves) ... H_ell0 (root).

    Immutable after construction; safe to share between threads.
    """

    def __init__(self, d: int, ell0: int, max_nodes: int = DEFAULT_MAX_NODES):
        """
        Build the hierarchy.

        Args:
            d: Dimension of the unit cube, at least 1
            ell0: Height of the tree (number of refinements), at least 0
            max_nodes: Upper bound on the total node count

        Raises:
            DomainError: If d or ell0 is out of range
            CapacityExceededError: If the node count exceeds max_nodes
        """
        if d < 1:
            raise DomainError(f"d must be >= 1, got {d}")
        if ell0 < 0:
            raise DomainError(f"ell0 must be >= 0, got {ell0}")
        nodes = sum(1 << (d * (ell0 - level)) for level in range(ell0 + 1))
        if nodes > max_nodes:
            raise CapacityExceededError(
                f"hierarchy with d={d}, ell0={ell0} has {nodes} nodes (cap {max_nodes})",
                limit=max_nodes,
                requested=nodes,
            )
        self.d = d
        self.ell0 = ell0
        self.node_count = nodes
        self.leaf_count = 1 << (d * ell0)
        self.fanout = 1 << d
        self.cells_per_axis = 1 << ell0
        # _spread[a] places bit j of axis index a at bit j*d
        spread = []
        for a in range(self.cells_per_axis):
            value = 0
            for j in range(ell0):
                if (a >> j) & 1:
                    value |= 1 << (j * d)
            spread.append(value)
        self._spread = spread

    def __repr__(self) -> str:
        return f"Hierarchy(d={self.d}, ell0={self.ell0})"

    def cells_at(self, level: int) -> int:
        """Number of cells in the level-``level`` partition."""
        self._check_level(level)
        return 1 << (self.d * (self.ell0 - level))

    def side_length(self, level: int) -> float:
        """Side length 2^-(ell0-level) of a level-``level`` cell."""
        self._check_level(level)
        return 2.0 ** -(self.ell0 - level)

    def diameter(self, level: int, norm: Norm = Norm.EUCLIDEAN) -> float:
        """Largest distance between two points of one level-``level`` cell."""
        side = self.side_length(level)
        norm = Norm(norm)
        if norm == Norm.L1:
            return self.d * side
        if norm == Norm.LINF:
            return side
        return math.sqrt(self.d) * side

    def _check_level(self, level: int) -> None:
        if level < 0 or level > self.ell0:
            raise DomainError(f"level {level} outside [0, {self.ell0}]")

    def leaf_axes(self, point: Sequence[float]) -> List[int]:
        """Per-axis leaf indices of a point; 1.0 maps to the last cell."""
        if len(point) != self.d:
            raise DomainError(f"point has dimension {len(point)}, expected {self.d}")
        cells = self.cells_per_axis
        axes = []
        for x in point:
            if not 0.0 <= x <= 1.0:
                raise DomainError(f"coordinate {x!r} outside [0, 1]")
            i = int(x * cells)
            axes.append(i if i < cells else cells - 1)
        return axes

    def leaf_key(self, point: Sequence[float]) -> int:
        """Interleaved key of the leaf cell containing ``point``."""
        spread = self._spread
        key = 0
        for axis, i in enumerate(self.leaf_axes(point)):
            key |= spread[i] << axis
        return key

    def encode(self, cube: HypercubeId) -> int:
        """Interleaved key of a cell given by per-axis indices."""
        self._check_level(cube.level)
        if len(cube.index) != self.d:
            raise DomainError(f"cell index has {len(cube.index)} axes, expected {self.d}")
        limit = 1 << (self.ell0 - cube.level)
        key = 0
        for axis, i in enumerate(cube.index):
            if not 0 <= i < limit:
                raise DomainError(f"axis index {i} outside [0, {limit - 1}] at level {cube.level}")
            key |= self._spread[i] << axis
        return key

    def decode(self, level: int, key: int) -> HypercubeId:
        """Per-axis indices of the level-``level`` cell with interleaved ``key``."""
        self._check_level(level)
        if not 0 <= key < self.cells_at(level):
            raise DomainError(f"key {key} outside level {level}")
        d = self.d
        index = []
        for axis in range(d):
            value = 0
            for j in range(self.ell0 - level):
                if (key >> (j * d + axis)) & 1:
                    value |= 1 << j
            index.append(value)
        return HypercubeId(level=level, index=tuple(index))

    def ancestor_key(self, leaf_key: int, level: int) -> int:
        """Key of the level-``level`` ancestor of a leaf key."""
        return leaf_key >> (self.d * level)

    def child_keys(self, key: int) -> range:
        """Keys of the children (one level down) of a cell key, lowest index first."""
        base = key << self.d
        return range(base, base + self.fanout)

    def shared_level(self, leaf_a: int, leaf_b: int) -> int:
        """Lowest level at which two leaves share a cell."""
        diff = leaf_a ^ leaf_b
        if diff == 0:
            return 0
        return (diff.bit_length() + self.d - 1) // self.d

    def cell_bounds(self, level: int, key: int) -> Tuple[Point, Point]:
        """Lower and upper corner of a cell."""
        cube = self.decode(level, key)
        side = self.side_length(level)
        lower = tuple(i * side for i in cube.index)
        upper = tuple(x + side for x in lower)
        return lower, upper

    def gap_to_cell(self, point: Sequence[float], level: int, key: int, norm: Norm) -> float:
        """Distance from a point to the closest point of a cell (0 inside)."""
        lower, upper = self.cell_bounds(level, key)
        deltas = [max(lo - x, 0.0, x - hi) for x, lo, hi in zip(point, lower, upper)]
        return norm_combine(deltas, norm)

    def contains(self, cube: HypercubeId, point: Sequence[float]) -> bool:
        """Whether the closed cell contains ``point``."""
        side = 2.0 ** -(self.ell0 - cube.level)
        return all(i * side <= x <= (i + 1) * side for i, x in zip(cube.index, point))


def build_hierarchy(d: int, ell0: int, max_nodes: int = DEFAULT_MAX_NODES) -> Hierarchy:
    """Build the dyadic hierarchy for ``[0,1]^d`` with ``ell0`` refinements."""
    return Hierarchy(d, ell0, max_nodes=max_nodes)


def leaf_of(hierarchy: Hierarchy, point: Sequence[float]) -> HypercubeId:
    """
    Leaf cell containing a point.

    Cells are half-open ``[a, b)`` except the last cell on each axis, which is
    closed, so the coordinate 1.0 maps to the last cell.

    Raises:
        DomainError: If a coordinate lies outside [0, 1] or the dimension is wrong
    """
    return HypercubeId(level=0, index=tuple(hierarchy.leaf_axes(point)))


def ancestor_of(hierarchy: Hierarchy, leaf: HypercubeId, level: int) -> HypercubeId:
    """
    Level-``level`` ancestor of a leaf; ``ancestor_of(h, leaf, 0) == leaf``.

    Raises:
        DomainError: If ``leaf`` is not a leaf or ``level`` is out of range
    """
    if leaf.level != 0:
        raise DomainError(f"expected a leaf cell, got level {leaf.level}")
    hierarchy._check_level(level)
    return HypercubeId(level=level, index=tuple(i >> level for i in leaf.index))


def ell0_for_horizon(d: int, n: int) -> int:
    """Largest ell0 with 2^(ell0*d) <= n (at least 0)."""
    ell0 = 0
    while (1 << ((ell0 + 1) * d)) <= n:
        ell0 += 1
    return ell0
