"""
Seeded, splittable random streams and point samplers.

Every replication draws from its own PCG64 stream spawned off the run seed,
so replications can run in any order or process and still reproduce.
"""

import hashlib
import math
from typing import Iterator, List

import numpy as np

from .geometry import Hierarchy, Point, ell0_for_horizon

POINT_CHUNK = 1 << 15


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent generator for replication ``replication`` of a run seeded with ``seed``."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    return np.random.Generator(np.random.PCG64(sequence))


def derive_seed(seed: int, *salt: object) -> int:
    """Deterministic 63-bit sub-seed of ``seed`` for the given salt."""
    text = "-".join([str(seed)] + [str(s) for s in salt])
    return int(hashlib.sha256(text.encode()).hexdigest(), 16) % (2 ** 63)


def uniform_points(rng: np.random.Generator, d: int, count: int) -> List[Point]:
    """``count`` i.i.d. uniform points of [0,1]^d as tuples."""
    if count <= 0:
        return []
    return [tuple(row) for row in rng.random((count, d)).tolist()]


def point_stream(rng: np.random.Generator, d: int, count: int) -> Iterator[Point]:
    """Yield ``count`` uniform points, drawn in chunks."""
    remaining = count
    while remaining > 0:
        size = min(POINT_CHUNK, remaining)
        for row in rng.random((size, d)).tolist():
            yield tuple(row)
        remaining -= size


def even_grid(d: int, m: int) -> List[Point]:
    """
    ``m`` evenly spread points of [0,1]^d.

    When ``m`` is a perfect d-th power these are the centres of the
    ``m^(1/d)``-per-axis lattice. Otherwise the centres of the smallest dyadic
    lattice with at least ``m`` sites are taken at evenly strided positions
    of the interleaved (space-filling) order.
    """
    k = round(m ** (1.0 / d))
    for candidate in (k - 1, k, k + 1):
        if candidate >= 1 and candidate ** d == m:
            axes = np.meshgrid(*([(np.arange(candidate) + 0.5) / candidate] * d), indexing="ij")
            grid = np.stack([a.ravel() for a in axes], axis=1)
            return [tuple(row) for row in grid.tolist()]

    level = max(ell0_for_horizon(d, m), 0)
    if (1 << (level * d)) < m:
        level += 1
    hierarchy = Hierarchy(d, level)
    picks = np.floor(np.arange(m) * (hierarchy.leaf_count / m)).astype(np.int64)
    side = hierarchy.side_length(0)
    points = []
    for key in picks.tolist():
        cube = hierarchy.decode(0, key)
        points.append(tuple((i + 0.5) * side for i in cube.index))
    return points


def poisson_nn_distance(d: int, m: int) -> float:
    """Large-m nearest-neighbour distance Gamma(1 + 1/d) / (V_d m)^(1/d) for Euclidean balls."""
    volume = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return math.gamma(1 + 1.0 / d) / (volume * m) ** (1.0 / d)


def replication_streams(seed: int, replication: int, count: int) -> List[np.random.Generator]:
    """``count`` independent generators for one replication (e.g. initial supply, demand, supply arrivals)."""
    return [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(replication, i))))
        for i in range(count)
    ]
