"""Synthetic weakly-dependent ground-truth scenarios with cluster structure.

The generator partitions the first-mode entities into clusters and plants CP
components whose first-mode loadings live entirely inside one cluster, so
entities from different clusters share no components. Other modes get smooth
sinusoid-mixture profiles. One block adjacency (within-cluster edges only)
and optionally a second noisier adjacency accompany each scenario.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import Adjacency
from .tensor import CpModel, DenseTensor, InputError, ObservationMask, _check_shape

MISSING_PATTERNS = ("random", "tail_block")


@dataclass
class WdgScenario:
    """Planted ground truth plus the graphs consistent with it."""

    truth: DenseTensor
    graphs: list[Adjacency]
    cluster_of: np.ndarray
    planted_model: CpModel
    noise_sigma: float


def _cluster_labels(n: int, clusters: int) -> np.ndarray:
    labels = np.zeros(n, dtype=int)
    for c, chunk in enumerate(np.array_split(np.arange(n), clusters)):
        labels[chunk] = c
    return labels


def _smooth_profile(rng: np.random.Generator, m: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, m)
    y = np.full(m, rng.uniform(0.2, 0.8))
    for _ in range(3):
        freq = rng.uniform(1.0, 4.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        y = y + rng.uniform(0.5, 1.5) * np.sin(2.0 * np.pi * freq * t + phase)
    norm = float(np.linalg.norm(y))
    if norm < 1e-12:
        return np.ones(m) / np.sqrt(m)
    return y / norm


def generate_wdg(
    dims: Sequence[int],
    clusters: int,
    rank_per_cluster: int,
    noise_sigma: float,
    seed: int,
    *,
    component_scale: float = 1000.0,
    loading_jitter: float = 0.3,
    second_graph: bool = True,
) -> WdgScenario:
    """Generate a clustered scenario: truth tensor, planted model, graphs.

    Component weights are drawn uniformly from [0.5, 1.5] * component_scale.
    First-mode loadings within a cluster sit near a common level (1 plus
    loading_jitter * normal noise) so graph smoothing matches the truth.
    Gaussian noise with std noise_sigma is added to the clean reconstruction;
    the noise draw is identical across noise_sigma values for a fixed seed.
    """
    dims = _check_shape(dims)
    clusters = int(clusters)
    rank_per_cluster = int(rank_per_cluster)
    if clusters < 1:
        raise InputError("need at least one cluster")
    if dims[0] < clusters:
        raise InputError(
            f"first mode has {dims[0]} entities, fewer than {clusters} clusters"
        )
    if rank_per_cluster < 1:
        raise InputError("rank_per_cluster must be at least 1")
    if noise_sigma < 0:
        raise InputError("noise_sigma must be nonnegative")
    if component_scale <= 0:
        raise InputError("component_scale must be positive")

    rng = np.random.default_rng(seed)
    n = dims[0]
    labels = _cluster_labels(n, clusters)
    rank = clusters * rank_per_cluster

    u1 = np.zeros((n, rank))
    other = [np.zeros((m, rank)) for m in dims[1:]]
    weights = np.zeros(rank)
    r = 0
    for c in range(clusters):
        members = np.flatnonzero(labels == c)
        for _ in range(rank_per_cluster):
            col = np.zeros(n)
            col[members] = 1.0 + loading_jitter * rng.standard_normal(len(members))
            norm = float(np.linalg.norm(col))
            if norm < 1e-12:
                col[members] = 1.0
                norm = float(np.sqrt(len(members)))
            u1[:, r] = col / norm
            for k, m in enumerate(dims[1:]):
                other[k][:, r] = _smooth_profile(rng, m)
            weights[r] = rng.uniform(0.5, 1.5) * component_scale
            r += 1

    model = CpModel(weights, [u1, *other])
    clean = np.einsum(
        "r," + ",".join(chr(97 + k) + "r" for k in range(len(dims)))
        + "->" + "".join(chr(97 + k) for k in range(len(dims))),
        weights,
        u1,
        *other,
        optimize=True,
    )

    same = labels[:, None] == labels[None, :]
    block = np.where(same, 1.0, 0.0)
    np.fill_diagonal(block, 0.0)
    graphs = [Adjacency(block)]
    if second_graph:
        within = rng.uniform(0.6, 1.0, size=(n, n))
        across = rng.uniform(0.0, 0.2, size=(n, n))
        noisy = np.where(same, within, across)
        noisy = np.triu(noisy, 1)
        graphs.append(Adjacency(noisy + noisy.T))

    noise = rng.standard_normal(dims)
    truth = DenseTensor(clean + noise_sigma * noise)
    return WdgScenario(
        truth=truth,
        graphs=graphs,
        cluster_of=labels,
        planted_model=model,
        noise_sigma=float(noise_sigma),
    )


def apply_missing(
    t: DenseTensor, pattern: str, amount, seed: int = 0
) -> ObservationMask:
    """Build an observation mask over t.

    pattern "random": each cell is observed independently with probability
    1 - amount, amount in [0, 1). pattern "tail_block": everything is
    observed except cells whose last-mode index >= amount[0] and second-mode
    index >= amount[1] (a contiguous trailing block).
    """
    if pattern not in MISSING_PATTERNS:
        raise InputError(f"unknown missing pattern {pattern!r}")
    shape = t.shape
    if pattern == "random":
        frac = float(amount)
        if not 0.0 <= frac < 1.0:
            raise InputError(f"random missing fraction must be in [0, 1), got {frac}")
        rng = np.random.default_rng(seed)
        return ObservationMask(rng.random(shape) >= frac)

    try:
        last_bound, second_bound = (int(b) for b in amount)
    except (TypeError, ValueError):
        raise InputError(
            "tail_block needs (last-mode bound, second-mode bound), "
            f"got {amount!r}"
        )
    if not 0 <= last_bound <= shape[-1]:
        raise InputError(f"last-mode bound {last_bound} out of range {shape[-1]}")
    if not 0 <= second_bound <= shape[1]:
        raise InputError(f"second-mode bound {second_bound} out of range {shape[1]}")
    k = len(shape)
    second = np.arange(shape[1]) >= second_bound
    last = np.arange(shape[-1]) >= last_bound
    shp2 = [1] * k
    shp2[1] = -1
    shpl = [1] * k
    shpl[-1] = -1
    missing = second.reshape(shp2) & last.reshape(shpl)
    flags = np.broadcast_to(~missing, shape).copy() if k == 2 else np.ones(shape, bool) & ~missing
    return ObservationMask(flags)
