"""
Observability hooks for logging and metrics in spatial_match.
"""

import logging
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Protocol

logger = logging.getLogger("spatial_match")


def _now() -> datetime:
    return datetime.now(timezone.utc)


class RunStartEvent:
    """Event data for the start of an engine run."""

    def __init__(
        self,
        run_id: str,
        model: str,
        d: int,
        horizon: int,
        replications: int,
        seed: int,
        timestamp: Optional[datetime] = None
    ):
        self.run_id = run_id
        self.model = model
        self.d = d
        self.horizon = horizon
        self.replications = replications
        self.seed = seed
        self.timestamp = timestamp or _now()


class RunEndEvent:
    """Event data for a completed engine run."""

    def __init__(
        self,
        run_id: str,
        model: str,
        elapsed_s: float,
        periods: int,
        matched: int,
        mean_cost: float,
        stderr: Optional[float] = None,
        stockouts: int = 0,
        invariant_violations: int = 0,
        timestamp: Optional[datetime] = None
    ):
        self.run_id = run_id
        self.model = model
        self.elapsed_s = elapsed_s
        self.periods = periods
        self.matched = matched
        self.mean_cost = mean_cost
        self.stderr = stderr
        self.stockouts = stockouts
        self.invariant_violations = invariant_violations
        self.timestamp = timestamp or _now()


class InvariantViolationEvent:
    """Event data for a runtime invariant violation."""

    def __init__(
        self,
        run_id: str,
        kind: str,
        period: int,
        level: int,
        key: int,
        observed: float,
        bound: float,
        timestamp: Optional[datetime] = None
    ):
        self.run_id = run_id
        self.kind = kind
        self.period = period
        self.level = level
        self.key = key
        self.observed = observed
        self.bound = bound
        self.timestamp = timestamp or _now()


class ObservabilityHook(Protocol):
    """Callbacks an engine invokes around runs and on boundary breaches."""

    def on_run_start(self, event: RunStartEvent) -> None:
        """Called when an engine run starts."""
        ...

    def on_run_end(self, event: RunEndEvent) -> None:
        """Called when an engine run completes."""
        ...

    def on_invariant_violation(self, event: InvariantViolationEvent) -> None:
        """Called when a debug-mode invariant check fails."""
        ...


class LoggingHook:
    """
    Logging hook that reports run events on the ``spatial_match`` logger.

    Example:
        ```python
        from spatial_match import SimConfig, run_semi_dynamic
        from spatial_match.observability import LoggingHook

        cfg = SimConfig(model="semi_dynamic", d=1, N=4096, seed=7)
        report = run_semi_dynamic(cfg, hook=LoggingHook(verbose=True))
        ```
    """

    def __init__(self, verbose: bool = False, log: Optional[logging.Logger] = None):
        """
        Log run events to the spatial_match logger.

        Args:
            verbose: Also log run starts and match totals
            log: Logger to write to (defaults to ``spatial_match``)
        """
        self.verbose = verbose
        self.log = log or logger

    def on_run_start(self, event: RunStartEvent) -> None:
        """Log run start."""
        if self.verbose:
            self.log.info(
                "run %s start: model=%s d=%d horizon=%d reps=%d seed=%d",
                event.run_id, event.model, event.d, event.horizon, event.replications, event.seed,
            )

    def on_run_end(self, event: RunEndEvent) -> None:
        """Log run completion."""
        self.log.info(
            "run %s done: model=%s mean_cost=%.6g elapsed=%.2fs",
            event.run_id, event.model, event.mean_cost, event.elapsed_s,
        )
        if self.verbose:
            self.log.info(
                "  periods=%d matched=%d stderr=%s stockouts=%d violations=%d",
                event.periods, event.matched, event.stderr, event.stockouts, event.invariant_violations,
            )

    def on_invariant_violation(self, event: InvariantViolationEvent) -> None:
        """Log an invariant violation."""
        self.log.warning(
            "run %s: %s violated at period %d (level %d, cell %d): %s vs bound %s",
            event.run_id, event.kind, event.period, event.level, event.key, event.observed, event.bound,
        )


class MetricsCollector:
    """
    Collects counters across engine runs.

    Example:
        ```python
        from spatial_match.observability import MetricsCollector

        collector = MetricsCollector()
        run_fully_dynamic(cfg, hook=collector)
        print(collector.get_summary())
        ```
    """

    def __init__(self):
        """Start with all counters at zero."""
        self.total_runs = 0
        self.completed_runs = 0
        self.total_periods = 0
        self.total_matched = 0
        self.total_stockouts = 0
        self.total_elapsed_s = 0.0
        self.runs_by_model: Dict[str, int] = {}
        self.violations_by_kind: Dict[str, int] = {}

    def on_run_start(self, event: RunStartEvent) -> None:
        """Record run start."""
        self.total_runs += 1
        self.runs_by_model[event.model] = self.runs_by_model.get(event.model, 0) + 1

    def on_run_end(self, event: RunEndEvent) -> None:
        """Record run completion."""
        self.completed_runs += 1
        self.total_periods += event.periods
        self.total_matched += event.matched
        self.total_stockouts += event.stockouts
        self.total_elapsed_s += event.elapsed_s

    def on_invariant_violation(self, event: InvariantViolationEvent) -> None:
        """Record an invariant violation."""
        self.violations_by_kind[event.kind] = self.violations_by_kind.get(event.kind, 0) + 1

    @property
    def total_violations(self) -> int:
        """Violations of every kind."""
        return sum(self.violations_by_kind.values())

    @property
    def periods_per_second(self) -> float:
        """Simulated periods per wall-clock second."""
        if self.total_elapsed_s == 0:
            return 0.0
        return self.total_periods / self.total_elapsed_s

    def get_summary(self) -> Dict[str, Any]:
        """
        Totals and rates over all completed runs.

        Returns:
            Mapping of counter name to value
        """
        return {
            "total_runs": self.total_runs,
            "completed_runs": self.completed_runs,
            "total_periods": self.total_periods,
            "total_matched": self.total_matched,
            "total_stockouts": self.total_stockouts,
            "total_violations": self.total_violations,
            "periods_per_second": self.periods_per_second,
            "runs_by_model": self.runs_by_model,
            "violations_by_kind": self.violations_by_kind,
        }


class CompositeHook:
    """
    Fans every event out to several hooks in order.

    Example:
        ```python
        from spatial_match.observability import CompositeHook, LoggingHook, MetricsCollector

        hook = CompositeHook([
            LoggingHook(verbose=True),
            MetricsCollector()
        ])
        ```
    """

    def __init__(self, hooks: List[ObservabilityHook]):
        """
        Wrap the given hooks.

        Args:
            hooks: Hooks to call, in order
        """
        self.hooks = hooks

    def on_run_start(self, event: RunStartEvent) -> None:
        """Call on_run_start on all hooks."""
        for hook in self.hooks:
            hook.on_run_start(event)

    def on_run_end(self, event: RunEndEvent) -> None:
        """Call on_run_end on all hooks."""
        for hook in self.hooks:
            hook.on_run_end(event)

    def on_invariant_violation(self, event: InvariantViolationEvent) -> None:
        """Call on_invariant_violation on all hooks."""
        for hook in self.hooks:
            hook.on_invariant_violation(event)
