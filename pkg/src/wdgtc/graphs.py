"""Graphs over the weakly-dependent mode: adjacency construction and Laplacians."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .tensor import InputError, _as_float_array

_ROW_SUM_TOL = 1e-10


@dataclass
class Adjacency:
    """Symmetric nonnegative weight matrix with zero diagonal."""

    weights: np.ndarray

    def __post_init__(self):
        w = _as_float_array(self.weights, "adjacency")
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InputError(f"adjacency must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise InputError("adjacency needs at least one node")
        if not np.array_equal(w, w.T):
            raise InputError("adjacency must be symmetric")
        if (w < 0).any():
            raise InputError("adjacency weights must be nonnegative")
        if np.diagonal(w).any():
            raise InputError("adjacency diagonal must be zero")
        self.weights = w

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def laplacian(a: Adjacency | np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian D - A with D the diagonal degree matrix."""
    if not isinstance(a, Adjacency):
        a = Adjacency(np.asarray(a, dtype=np.float64))
    w = a.weights
    return np.diag(w.sum(axis=1)) - w


@dataclass
class GraphPenalty:
    """One graph regularizer: adjacency, its Laplacian, and a penalty weight."""

    adjacency: Adjacency
    laplacian: np.ndarray
    weight: float

    def __post_init__(self):
        self.weight = float(self.weight)
        if self.weight < 0:
            raise InputError("graph penalty weight must be nonnegative")
        lap = _as_float_array(self.laplacian, "laplacian")
        n = self.adjacency.n
        if lap.shape != (n, n):
            raise InputError(f"laplacian shape {lap.shape} does not match n={n}")
        if not np.allclose(lap, lap.T, rtol=0.0, atol=0.0):
            raise InputError("laplacian must be symmetric")
        scale = 1.0 + np.abs(lap).max()
        if np.abs(lap.sum(axis=1)).max() > _ROW_SUM_TOL * scale:
            raise InputError("laplacian rows must sum to zero")
        self.laplacian = lap

    @property
    def n(self) -> int:
        return self.adjacency.n

    @classmethod
    def from_adjacency(cls, a: Adjacency, weight: float) -> "GraphPenalty":
        return cls(a, laplacian(a), weight)


def poi_similarity(poi_vectors: Sequence[Sequence[float]]) -> Adjacency:
    """Pairwise cosine similarity of nonnegative feature vectors, zero diagonal."""
    try:
        arr = np.asarray(poi_vectors, dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"feature vectors must all have the same length: {exc}")
    if arr.ndim != 2:
        raise InputError("feature vectors must all have the same length")
    if arr.shape[0] < 2:
        raise InputError("need at least two entities")
    if not np.isfinite(arr).all():
        raise InputError("feature vectors must be finite")
    if (arr < 0).any():
        raise InputError("feature vectors must be nonnegative")
    norms = np.linalg.norm(arr, axis=1)
    if (norms == 0).any():
        raise InputError("zero feature vectors have undefined cosine similarity")
    unit = arr / norms[:, None]
    sim = unit @ unit.T
    np.clip(sim, 0.0, 1.0, out=sim)
    upper = np.triu(sim, 1)
    return Adjacency(upper + upper.T)


def khop_binary(n: int, edges: Iterable[tuple[int, int]], k: int) -> Adjacency:
    """Binary adjacency marking node pairs within k hops (unweighted BFS)."""
    n = int(n)
    k = int(k)
    if n < 1:
        raise InputError("need at least one node")
    if k < 1:
        raise InputError("hop bound must be at least 1")
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise InputError(f"edge ({i},{j}) out of range for {n} nodes")
        if i != j:
            neighbors[i].append(j)
            neighbors[j].append(i)
    out = np.zeros((n, n))
    for src in range(n):
        dist = np.full(n, -1)
        dist[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if dist[u] == k:
                continue
            for v in neighbors[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        reach = (dist > 0) & (dist <= k)
        out[src, reach] = 1.0
    return Adjacency(out)
