"""
Worker pool for replications and sweep points.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from .errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "SPATIAL_MATCH_THREADS"


def resolve_threads(threads: Optional[int] = None) -> int:
    """
    Number of workers: the explicit value, else ``SPATIAL_MATCH_THREADS``, else 1.

    Raises:
        ConfigError: If the value is not a positive integer
    """
    if threads is None:
        raw = os.environ.get(THREADS_ENV)
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}", field="threads")
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}", field="threads")
    return threads


def run_jobs(fn: Callable[[T], R], jobs: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply ``fn`` to every job and return the results in submission order.

    With more than one thread the jobs run in worker processes; ``fn`` and the
    jobs must then be picklable. Each job owns its state, so the result list
    is identical to the serial one.
    """
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(fn, jobs))
