"""
Recorded per-period leaf arrivals of a simulation run.
"""

from typing import Optional, Tuple

import numpy as np

from .errors import DomainError
from .models import GammaSchedule


class SimulationTrace:
    """
    Leaf keys of every demand arrival, matched supply unit and supply arrival.

    Cell counts at any level are replayed from the leaf keys by shifting them
    by ``d * level``. ``supply_leaves`` is None for runs without supply
    arrivals (semi-dynamic).
    """

    def __init__(
        self,
        d: int,
        ell0: int,
        schedule: GammaSchedule,
        initial_leaf_counts: np.ndarray,
        demand_leaves: np.ndarray,
        matched_leaves: np.ndarray,
        supply_leaves: Optional[np.ndarray] = None,
        excess: int = 0
    ):
        if len(demand_leaves) != len(matched_leaves):
            raise DomainError("demand and matched leaf records differ in length")
        if supply_leaves is not None and len(supply_leaves) != len(demand_leaves):
            raise DomainError("supply and demand leaf records differ in length")
        self.d = d
        self.ell0 = ell0
        self.schedule = schedule
        self.initial_leaf_counts = np.asarray(initial_leaf_counts, dtype=np.int64)
        self.demand_leaves = np.asarray(demand_leaves, dtype=np.int64)
        self.matched_leaves = np.asarray(matched_leaves, dtype=np.int64)
        self.supply_leaves = None if supply_leaves is None else np.asarray(supply_leaves, dtype=np.int64)
        self.excess = excess

    @property
    def horizon(self) -> int:
        """Number of recorded periods."""
        return len(self.demand_leaves)

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.ell0:
            raise DomainError(f"level {level} outside [0, {self.ell0}]")

    def cells_at(self, level: int) -> int:
        self._check_level(level)
        return 1 << (self.d * (self.ell0 - level))

    def initial_counts(self, level: int) -> np.ndarray:
        """n_h(1) for every cell of ``level``."""
        self._check_level(level)
        keys = np.arange(len(self.initial_leaf_counts), dtype=np.int64) >> (self.d * level)
        return np.bincount(keys, weights=self.initial_leaf_counts, minlength=self.cells_at(level)).astype(np.int64)

    def demand_counts(self, level: int) -> np.ndarray:
        """Total demand arrivals over the horizon in every cell of ``level``."""
        self._check_level(level)
        return np.bincount(self.demand_leaves >> (self.d * level), minlength=self.cells_at(level))

    def node_series(self, level: int, key: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Supply counts of one cell over the run.

        Returns:
            ``(starts, after_match)``: n_h at the start of periods 1..T+1 and
            n~_h right after the match of periods 1..T
        """
        if not 0 <= key < self.cells_at(level):
            raise DomainError(f"key {key} outside level {level}")
        shift = self.d * level
        matched = ((self.matched_leaves >> shift) == key).astype(np.int64)
        if self.supply_leaves is None:
            arrived = np.zeros_like(matched)
        else:
            arrived = ((self.supply_leaves >> shift) == key).astype(np.int64)
        first = int(self.initial_counts(level)[key])
        starts = first + np.concatenate(([0], np.cumsum(arrived - matched)))
        return starts, starts[:-1] - matched
