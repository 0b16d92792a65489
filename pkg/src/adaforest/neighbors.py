"""Exact brute-force k-nearest-neighbor queries over feature rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NeighborQuery:
    """k nearest by Euclidean distance; candidate_mask optionally restricts the pool."""

    k: int = 5
    candidate_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


def knn(matrix: np.ndarray, query_row: int, q: NeighborQuery) -> list[tuple[int, float]]:
    """Return up to q.k (row index, distance) pairs, nearest first.

    The query row is never its own neighbor. Distance ties are broken by
    ascending row index so downstream samplers are deterministic.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    candidates = np.ones(n, dtype=bool)
    if q.candidate_mask is not None:
        mask = np.asarray(q.candidate_mask, dtype=bool)
        if mask.shape[0] != n:
            raise ValueError("candidate_mask length does not match matrix rows")
        candidates &= mask
    candidates[query_row] = False
    pool = np.nonzero(candidates)[0]
    if pool.size == 0:
        raise ValueError("empty candidate pool for knn query")
    diffs = matrix[pool] - matrix[query_row]
    dists = np.sqrt((diffs * diffs).sum(axis=1))
    k = min(q.k, pool.size)
    # lexsort: primary key distance, secondary key row index
    order = np.lexsort((pool, dists))[:k]
    return [(int(pool[i]), float(dists[i])) for i in order]


def knn_indices(matrix: np.ndarray, query_row: int, q: NeighborQuery) -> np.ndarray:
    """Neighbor row indices only, in the same order as knn()."""
    return np.array([i for i, _ in knn(matrix, query_row, q)], dtype=np.int64)
