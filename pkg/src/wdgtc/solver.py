"""Block coordinate descent for graph-regularized sparse CP tensor completion.

The estimator fills in missing cells of a K-mode tensor with a CP model whose
weight vector carries an L1 penalty (automatic rank selection), whose factor
matrix along one designated weakly-dependent mode carries an entrywise L1
penalty (sparse loadings), and whose rows along that mode are smoothed by one
or more graph Laplacian penalties. Each sweep cycles over the components; a
component update solves the graph-mode vector in closed form through a
symmetric positive-definite system followed by soft-thresholding and
normalization, rescales the remaining mode vectors, shrinks the weight, and
then refreshes the completion on the unobserved cells. Components whose
weight shrinks to zero are pruned at the end of the sweep and never return.

The penalized objective is

    0.5 * ||Y - sum_r w_r u_r^(1) o ... o u_r^(K)||_F^2
        + alpha * ||U_wdg||_1 + beta * ||w||_1
        + sum_i 0.5 * gamma_i * tr(U_wdg^T L_i U_wdg)

subject to Y matching the input on observed cells and unit-norm columns for
active components.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graphs import GraphPenalty
from .tensor import (
    CpModel,
    DenseTensor,
    InputError,
    ObservationMask,
    _cp_sum,
    contract_all,
    contract_all_but,
    cp_reconstruct,
    project_replace,
    sq_frobenius_diff,
)

CONVERGED = "converged"
MAX_ITER_REACHED = "max_iter_reached"
RANK_COLLAPSED = "rank_collapsed"
_TERMINATIONS = (CONVERGED, MAX_ITER_REACHED, RANK_COLLAPSED)

# weights below this are treated as pruned to keep later divisions safe
PRUNE_EPS = 1e-14


class DegenerateComponentError(Exception):
    """A non-graph mode update produced a (near-)zero vector; prune the component."""


@dataclass(frozen=True)
class SolverConfig:
    """Penalty coefficients and iteration controls for :func:`solve`.

    ``graph_weights`` overrides the weights carried by the supplied
    GraphPenalty values when given (one coefficient per graph, in order);
    leave it None to use the weights attached to the graphs. ``wdg_mode`` is
    the 0-based index of the weakly-dependent mode carrying the sparsity and
    graph penalties.
    """

    alpha: float = 0.0
    beta: float = 0.0
    graph_weights: tuple[float, ...] | None = None
    initial_rank: int = 10
    max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0
    wdg_mode: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InputError("alpha and beta must be nonnegative")
        if self.graph_weights is not None:
            object.__setattr__(
                self, "graph_weights", tuple(float(w) for w in self.graph_weights)
            )
            if any(w < 0 for w in self.graph_weights):
                raise InputError("graph weights must be nonnegative")
        if self.initial_rank < 1:
            raise InputError("initial_rank must be at least 1")
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.wdg_mode < 0:
            raise InputError("wdg_mode must be a valid mode index")


@dataclass
class CompletionResult:
    """Output of :func:`solve`.

    ``completed`` matches the input bit-exactly on observed cells. The
    ``objective_trace`` holds the penalized objective after initialization
    and after each sweep. ``completion_step_deltas`` records, per sweep, the
    largest change in the loss term caused by a completion refresh (never
    positive beyond rounding; kept as a diagnostic).
    """

    completed: DenseTensor
    model: CpModel
    final_rank: int
    objective_trace: tuple[float, ...]
    termination: str
    completion_step_deltas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.termination not in _TERMINATIONS:
            raise InputError(f"unknown termination {self.termination!r}")
        if len(self.objective_trace) == 0:
            raise InputError("objective trace must be nonempty")
        if self.final_rank != self.model.nonzero_count:
            raise InputError("final_rank must equal the count of nonzero weights")


def soft_threshold(x, t: float):
    """Elementwise sign(x) * max(|x| - t, 0); scalar in, scalar out."""
    if t < 0:
        raise InputError("threshold must be nonnegative")
    if np.isscalar(x):
        return float(np.sign(x) * max(abs(x) - t, 0.0))
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def residual_tensor(y: DenseTensor, m: CpModel, r: int) -> DenseTensor:
    """Residual of y after removing every component except r."""
    if not 0 <= r < m.rank:
        raise InputError(f"component {r} out of range for rank {m.rank}")
    weights = np.delete(m.weights, r)
    factors = [np.delete(f, r, axis=1) for f in m.factors]
    if m.shape != y.shape:
        raise InputError(f"model shape {m.shape} does not match tensor {y.shape}")
    return DenseTensor(y.values - _cp_sum(weights, factors, y.shape))


def _effective_graphs(
    cfg: SolverConfig, graphs: Sequence[GraphPenalty]
) -> list[GraphPenalty]:
    if cfg.graph_weights is None:
        return list(graphs)
    if len(cfg.graph_weights) != len(graphs):
        raise InputError(
            f"got {len(cfg.graph_weights)} graph weights for {len(graphs)} graphs"
        )
    return [
        g if g.weight == w else GraphPenalty(g.adjacency, g.laplacian, w)
        for g, w in zip(graphs, cfg.graph_weights)
    ]


def update_u1(
    y_r: DenseTensor,
    lambda_r: float,
    others: Sequence[np.ndarray],
    alpha: float,
    graphs: Sequence[GraphPenalty] = (),
    mode: int = 0,
) -> tuple[np.ndarray, bool]:
    """Closed-form update of the graph-mode vector of one component.

    Solves (lambda_r^2 I + sum_i gamma_i L_i) w = lambda_r * contraction,
    soft-thresholds w by alpha, and normalizes. Returns (vector, pruned);
    pruned is True when thresholding wiped the whole vector, in which case
    the unnormalized zero vector is returned.
    """
    if lambda_r == 0.0:
        raise InputError("component weight must be nonzero for the graph-mode update")
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    b = lambda_r * contract_all_but(y_r, others, mode)
    n = b.shape[0]
    system = (lambda_r * lambda_r) * np.eye(n)
    for g in graphs:
        if g.n != n:
            raise InputError(f"graph on {g.n} nodes does not match mode size {n}")
        system += g.weight * g.laplacian
    w = cho_solve(cho_factor(system, lower=True), b)
    w = soft_threshold(w, alpha)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return w, True
    return w / norm, False


def update_uk(
    y_r: DenseTensor,
    lambda_r: float,
    others: Sequence[np.ndarray],
    k: int,
) -> np.ndarray:
    """Update a non-graph mode vector: contract, divide by the weight, normalize.

    Raises DegenerateComponentError when the contraction is (near-)zero and
    the component should be pruned by the caller.
    """
    if lambda_r == 0.0:
        raise InputError("component weight must be nonzero for a mode update")
    w = contract_all_but(y_r, others, k) / lambda_r
    norm = float(np.linalg.norm(w))
    if norm < 1e-14:
        raise DegenerateComponentError(f"mode {k} update collapsed to zero")
    return w / norm


def update_lambda(
    y_r: DenseTensor, vectors: Sequence[np.ndarray], beta: float
) -> float:
    """Shrunken weight update: soft_threshold(<y_r, rank-one(vectors)>, beta)."""
    for v in vectors:
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-8:
            raise InputError("mode vectors must have unit norm")
    return soft_threshold(contract_all(y_r, vectors), beta)


def update_completion(
    y: DenseTensor, x: DenseTensor, mask: ObservationMask, m: CpModel
) -> DenseTensor:
    """Keep observed cells from x, fill unobserved cells from the model."""
    if y.shape != x.shape:
        raise InputError(f"shape mismatch: {y.shape} vs {x.shape}")
    rec = cp_reconstruct(m, x.shape)
    return project_replace(rec, mask, x)


def objective(
    y: DenseTensor,
    m: CpModel,
    cfg: SolverConfig,
    graphs: Sequence[GraphPenalty] = (),
) -> float:
    """Full penalized objective at (y, m)."""
    graphs = _effective_graphs(cfg, graphs)
    rec = cp_reconstruct(m, y.shape)
    value = 0.5 * sq_frobenius_diff(y, rec)
    u_wdg = m.factors[cfg.wdg_mode]
    value += cfg.alpha * float(np.abs(u_wdg).sum())
    value += cfg.beta * float(np.abs(m.weights).sum())
    for g in graphs:
        value += 0.5 * g.weight * float(np.trace(u_wdg.T @ g.laplacian @ u_wdg))
    return value


def smooth_objective_value(
    y: DenseTensor,
    weights: np.ndarray,
    factors: Sequence[np.ndarray],
    cfg: SolverConfig,
    graphs: Sequence[GraphPenalty] = (),
) -> float:
    """Smooth part of the objective (loss + Laplacian terms, no L1 terms).

    Takes raw weight and factor arrays so the columns need not be unit-norm;
    used for finite-difference gradient checks.
    """
    graphs = _effective_graphs(cfg, graphs)
    weights = np.asarray(weights, dtype=np.float64)
    rec = _cp_sum(weights, factors, y.shape)
    diff = y.values - rec
    value = 0.5 * float(np.sum(diff * diff))
    u_wdg = factors[cfg.wdg_mode]
    for g in graphs:
        value += 0.5 * g.weight * float(np.trace(u_wdg.T @ g.laplacian @ u_wdg))
    return value


def smooth_objective_gradients(
    y: DenseTensor,
    weights: np.ndarray,
    factors: Sequence[np.ndarray],
    cfg: SolverConfig,
    graphs: Sequence[GraphPenalty] = (),
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Analytic partials of :func:`smooth_objective_value`.

    Returns (d/dweights, [d/dfactor_k ...]) with the same shapes as the
    inputs.
    """
    graphs = _effective_graphs(cfg, graphs)
    weights = np.asarray(weights, dtype=np.float64)
    k_modes = len(factors)
    rank = len(weights)
    err = DenseTensor(y.values - _cp_sum(weights, factors, y.shape))
    grad_w = np.zeros(rank)
    grad_f = [np.zeros_like(f) for f in factors]
    for r in range(rank):
        cols = [factors[k][:, r] for k in range(k_modes)]
        grad_w[r] = -contract_all(err, cols)
        for k in range(k_modes):
            others = [cols[j] for j in range(k_modes) if j != k]
            grad_f[k][:, r] = -weights[r] * contract_all_but(err, others, k)
    for g in graphs:
        grad_f[cfg.wdg_mode] += g.weight * (g.laplacian @ factors[cfg.wdg_mode])
    return grad_w, grad_f


def _unit_columns(rng: np.random.Generator, rows: int, rank: int) -> np.ndarray:
    f = rng.standard_normal((rows, rank))
    norms = np.linalg.norm(f, axis=0)
    norms[norms == 0.0] = 1.0
    return f / norms


def _refresh_completion(
    y_vals: np.ndarray,
    x_vals: np.ndarray,
    flags: np.ndarray,
    weights: np.ndarray,
    factors: list[np.ndarray],
) -> tuple[np.ndarray, float]:
    """Apply the completion update, returning the new y and the change it
    caused in the loss term (new minus old, at the current model)."""
    rec = _cp_sum(weights, factors, y_vals.shape)
    before = y_vals - rec
    loss_before = 0.5 * float(np.sum(before * before))
    new_y = np.where(flags, x_vals, rec)
    after = new_y - rec
    loss_after = 0.5 * float(np.sum(after * after))
    return new_y, loss_after - loss_before


def solve(
    x: DenseTensor,
    mask: ObservationMask,
    cfg: SolverConfig,
    graphs: Sequence[GraphPenalty] = (),
) -> CompletionResult:
    """Run the block coordinate descent completion.

    Unobserved cells of ``x`` are treated as zero; ``mask`` is the single
    source of observedness. Factors start as random unit columns (seeded by
    ``cfg.seed``); the weights start from one greedy shrunken-contraction
    pass against the observed data so they begin at data scale. Each sweep
    updates every still-active component (graph-mode vector, remaining mode
    vectors, weight, then a completion refresh), prunes zero-weight
    components, and stops when the objective drop falls below ``cfg.tol``,
    when ``cfg.max_iter`` sweeps have run, or when every component has been
    pruned.
    """
    if x.shape != mask.shape:
        raise InputError(f"mask shape {mask.shape} does not match tensor {x.shape}")
    if mask.observed_count < 1:
        raise InputError("mask must mark at least one observed cell")
    if not np.isfinite(x.values).all():
        raise InputError("input tensor must be finite")
    k_modes = x.ndim
    if cfg.wdg_mode >= k_modes:
        raise InputError(f"wdg_mode {cfg.wdg_mode} out of range for {k_modes} modes")
    graphs = _effective_graphs(cfg, graphs)
    n_wdg = x.shape[cfg.wdg_mode]
    for g in graphs:
        if g.n != n_wdg:
            raise InputError(
                f"graph on {g.n} nodes does not match weakly-dependent mode size {n_wdg}"
            )

    shape = x.shape
    flags = mask.flags
    x_vals = np.where(flags, x.values, 0.0)

    rng = np.random.default_rng(cfg.seed)
    rank = cfg.initial_rank
    factors = [_unit_columns(rng, s, rank) for s in shape]
    weights = np.zeros(rank)

    # greedy initial pass of the weight update against the observed data
    residual = x_vals.copy()
    for r in range(rank):
        cols = [f[:, r] for f in factors]
        lam = update_lambda(DenseTensor(residual), cols, cfg.beta)
        if abs(lam) < PRUNE_EPS:
            lam = 0.0
        weights[r] = lam
        if lam != 0.0:
            residual = residual - _cp_sum(
                np.array([lam]), [c[:, None] for c in cols], shape
            )

    model = CpModel(weights, factors)
    y_vals, _ = _refresh_completion(x_vals, x_vals, flags, weights, factors)
    trace = [objective(DenseTensor(y_vals), model, cfg, graphs)]
    completion_deltas: list[float] = []
    other_modes = [k for k in range(k_modes) if k != cfg.wdg_mode]

    termination = MAX_ITER_REACHED
    for _ in range(cfg.max_iter):
        weights = model.weights
        factors = model.factors
        max_delta = -np.inf
        for r in range(model.rank):
            if weights[r] == 0.0:
                continue
            y_r = residual_tensor(DenseTensor(y_vals), model, r)
            try:
                others = [factors[j][:, r] for j in other_modes]
                u1, pruned = update_u1(
                    y_r, weights[r], others, cfg.alpha, graphs, mode=cfg.wdg_mode
                )
                if pruned:
                    weights[r] = 0.0
                else:
                    factors[cfg.wdg_mode][:, r] = u1
                    for k in other_modes:
                        others_k = [
                            factors[j][:, r] for j in range(k_modes) if j != k
                        ]
                        factors[k][:, r] = update_uk(y_r, weights[r], others_k, k)
                    cols = [factors[j][:, r] for j in range(k_modes)]
                    lam = update_lambda(y_r, cols, cfg.beta)
                    weights[r] = 0.0 if abs(lam) < PRUNE_EPS else lam
            except DegenerateComponentError:
                weights[r] = 0.0
            y_vals, delta = _refresh_completion(
                y_vals, x_vals, flags, weights, factors
            )
            max_delta = max(max_delta, delta)

        y_vals, delta = _refresh_completion(y_vals, x_vals, flags, weights, factors)
        max_delta = max(max_delta, delta)
        completion_deltas.append(max_delta)

        keep = weights != 0.0
        if not keep.all():
            weights = weights[keep]
            factors = [f[:, keep] for f in factors]
        model = CpModel(weights, factors)

        trace.append(objective(DenseTensor(y_vals), model, cfg, graphs))
        drop = trace[-2] - trace[-1]
        if drop < -1e-9 * (1.0 + abs(trace[-2])):
            warnings.warn(
                f"objective increased by {-drop:.3e} during a sweep", RuntimeWarning
            )
        if model.rank == 0:
            termination = RANK_COLLAPSED
            break
        if drop < cfg.tol:
            termination = CONVERGED
            break

    return CompletionResult(
        completed=DenseTensor(y_vals),
        model=model,
        final_rank=model.nonzero_count,
        objective_trace=tuple(trace),
        termination=termination,
        completion_step_deltas=tuple(completion_deltas),
    )
