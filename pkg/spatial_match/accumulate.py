"""
Cost accounting for engine runs.
"""

import math
from array import array
from typing import Any, List, Optional, Sequence

import numpy as np

from .errors import InvariantViolationError
from .models import CostReport, LevelStats, SimConfig


class ReplicationResult:
    """Measured statistics of one replication, ready to be merged."""

    def __init__(
        self,
        level_counts: List[int],
        level_costs: List[float],
        periods_measured: int,
        warmup: int,
        samples: Optional[List[float]] = None,
        transient: Optional[int] = None,
        stockouts: int = 0,
        violations: int = 0,
        trace: Any = None,
        stationarity_z: Optional[float] = None,
        match_total: Optional[float] = None
    ):
        self.level_counts = level_counts
        self.level_costs = level_costs
        self.periods_measured = periods_measured
        self.warmup = warmup
        self.samples = samples
        self.transient = transient
        self.stockouts = stockouts
        self.violations = violations
        self.trace = trace
        self.stationarity_z = stationarity_z
        # sum over the individual kept matches, independent of the level split
        self.match_total = math.fsum(level_costs) if match_total is None else match_total

    @property
    def matched(self) -> int:
        return sum(self.level_counts)

    @property
    def total_cost(self) -> float:
        return math.fsum(self.level_costs)

    @property
    def mean(self) -> float:
        return self.total_cost / self.matched if self.matched else 0.0


class CostAccumulator:
    """
    Helper class to accumulate match distances period by period.

    Every match is kept (period, level, distance) so the warmup can be decided
    after the run, once the transient has been observed.
    """

    def __init__(self, ell0: int):
        """
        Initialize the accumulator.

        Args:
            ell0: Height of the hierarchy used to classify match levels
        """
        self.ell0 = ell0
        self.periods = array("q")
        self.levels = array("b")
        self.distances = array("d")
        self.stockouts = 0

    def add_match(self, period: int, level: int, distance: float) -> None:
        """
        Add one match.

        Args:
            period: Period in which the demand was served (1-based)
            level: Lowest level shared by demand and supply
            distance: Match distance
        """
        self.periods.append(period)
        self.levels.append(level)
        self.distances.append(distance)

    def add_stockout(self) -> None:
        """Count a demand unit that found no free supply on arrival."""
        self.stockouts += 1

    def __len__(self) -> int:
        return len(self.distances)

    def summarize(
        self,
        warmup: int,
        horizon: int,
        keep_samples: bool = False,
        **extra: Any
    ) -> ReplicationResult:
        """
        Reduce the recorded matches of periods after ``warmup``.

        Args:
            warmup: Number of leading periods to exclude
            horizon: Total number of simulated periods
            keep_samples: Whether to keep the per-match distances
            **extra: Passed through to ReplicationResult

        Returns:
            The replication's per-level statistics
        """
        periods = np.array(self.periods, dtype=np.int64)
        levels = np.array(self.levels, dtype=np.int64)
        distances = np.array(self.distances, dtype=np.float64)
        keep = periods > warmup
        kept_levels = levels[keep]
        kept = distances[keep]
        counts = np.bincount(kept_levels, minlength=self.ell0 + 1)
        costs = np.bincount(kept_levels, weights=kept, minlength=self.ell0 + 1)
        return ReplicationResult(
            level_counts=[int(c) for c in counts],
            level_costs=[float(c) for c in costs],
            periods_measured=horizon - warmup,
            warmup=warmup,
            samples=kept.tolist() if keep_samples else None,
            stockouts=self.stockouts,
            match_total=math.fsum(kept),
            **extra,
        )

    def window(self, start: int, stop: int) -> np.ndarray:
        """Match distances of periods in ``(start, stop]``."""
        periods = np.array(self.periods, dtype=np.int64)
        distances = np.array(self.distances, dtype=np.float64)
        return distances[(periods > start) & (periods <= stop)]

    def stationarity_z(self, horizon: int, batches: int = 20) -> Optional[float]:
        """
        Gap between the second-half and last-quarter mean cost, in standard errors.

        Standard errors come from batch means, which absorbs the serial
        correlation of consecutive periods. None when a window is too short.
        """
        half = self.window(horizon // 2, horizon)
        quarter = self.window(horizon - horizon // 4, horizon)
        if len(quarter) < 2 * batches:
            return None
        errors = []
        for values in (half, quarter):
            means = [chunk.mean() for chunk in np.array_split(values, batches)]
            errors.append(float(np.std(means, ddof=1)) / math.sqrt(batches))
        spread = math.hypot(*errors)
        gap = abs(float(half.mean()) - float(quarter.mean()))
        if spread == 0.0:
            return 0.0 if gap == 0.0 else math.inf
        return gap / spread


def build_report(
    cfg: SimConfig,
    results: Sequence[ReplicationResult],
    ell0: int,
    gammas: Optional[List[float]] = None,
    supply_cost: Optional[float] = None
) -> CostReport:
    """
    Merge replications into a CostReport.

    The mean is pooled over all measured matches; the standard error is the
    spread of the replication means (None for a single replication).

    Raises:
        InvariantViolationError: If per-level totals disagree with the pooled mean
    """
    levels = max(len(r.level_counts) for r in results)
    counts = [0] * levels
    costs: List[List[float]] = [[] for _ in range(levels)]
    for result in results:
        for level, (count, cost) in enumerate(zip(result.level_counts, result.level_costs)):
            counts[level] += count
            costs[level].append(cost)
    level_totals = [math.fsum(c) for c in costs]
    matched = sum(counts)
    total = math.fsum(level_totals)
    mean = total / matched if matched else 0.0
    per_match = math.fsum(r.match_total for r in results)
    if not math.isclose(total, per_match, rel_tol=1e-9, abs_tol=1e-9):
        raise InvariantViolationError(
            f"per-level costs sum to {total}, per-match distances to {per_match}",
            kind="level_accounting",
        )

    means = [r.mean for r in results]
    stderr = None
    if len(means) >= 2:
        stderr = float(np.std(means, ddof=1) / math.sqrt(len(means)))

    transients = [r.transient for r in results if r.transient is not None]
    gaps = [r.stationarity_z for r in results if r.stationarity_z is not None]
    samples = None
    if cfg.keep_samples:
        samples = [s for r in results for s in (r.samples or [])]

    report = CostReport(
        model=cfg.model,
        d=cfg.d,
        replications=len(results),
        mean_cost=mean,
        stderr=stderr,
        per_level=[LevelStats(level=l, match_count=counts[l], total_cost=level_totals[l]) for l in range(levels)],
        matched=matched,
        periods_measured=sum(r.periods_measured for r in results),
        warmup=max(r.warmup for r in results),
        ell0=ell0,
        gammas=gammas,
        transient_estimate=max(transients) if transients else None,
        replication_means=means,
        stockouts=sum(r.stockouts for r in results),
        supply_cost=supply_cost,
        total_cost=(supply_cost + mean) if supply_cost is not None else None,
        invariant_violations=sum(r.violations for r in results),
        stationarity_z=max(gaps) if gaps else None,
        raw_samples=samples,
    )
    report._traces = [r.trace for r in results if r.trace is not None]
    return report
