"""Dense K-mode tensor algebra: storage, contractions, CP reconstruction, masks.

Tensors are stored as K-dimensional float64 numpy arrays, 2 <= K <= 8. The
canonical cell order used by the text file format is first-index-fastest
(Fortran order); in-memory layout is whatever numpy provides. All arithmetic
is 64-bit. Construction rejects non-finite values, so every public operation
returns finite tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_MODES = 8
UNIT_NORM_TOL = 1e-10

_MODE_LETTERS = "abcdefgh"


class InputError(ValueError):
    """An argument violated a documented precondition."""


def _check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not 2 <= len(shape) <= MAX_MODES:
        raise InputError(
            f"tensors must have between 2 and {MAX_MODES} modes, got {len(shape)}"
        )
    if any(s < 1 for s in shape):
        raise InputError(f"every mode size must be at least 1, got {shape}")
    return shape


def _as_float_array(values, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise InputError(f"{name} must be finite (no NaN/Inf)")
    return arr


@dataclass
class DenseTensor:
    """Dense real tensor with 2 to 8 modes.

    Treat instances as immutable values; operations return fresh tensors.
    """

    values: np.ndarray

    def __post_init__(self):
        self.values = _as_float_array(self.values)
        _check_shape(self.values.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "DenseTensor":
        return cls(np.zeros(_check_shape(shape)))


@dataclass
class ObservationMask:
    """Boolean tensor marking which cells of a paired DenseTensor are observed."""

    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool)
        _check_shape(self.flags.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.flags.shape

    @property
    def observed_count(self) -> int:
        return int(np.count_nonzero(self.flags))

    @classmethod
    def all_observed(cls, shape: Sequence[int]) -> "ObservationMask":
        return cls(np.ones(_check_shape(shape), dtype=bool))

    @classmethod
    def none_observed(cls, shape: Sequence[int]) -> "ObservationMask":
        return cls(np.zeros(_check_shape(shape), dtype=bool))


@dataclass
class CpModel:
    """Weighted sum of rank-one tensors: weights (R,) and K factors (I_k, R).

    Every column belonging to a nonzero weight must have unit 2-norm; columns
    of zero-weight components are unconstrained (they contribute nothing).
    """

    weights: np.ndarray
    factors: list[np.ndarray]

    def __post_init__(self):
        self.weights = _as_float_array(self.weights, "weights")
        if self.weights.ndim != 1:
            raise InputError("weights must be a vector")
        self.factors = [_as_float_array(f, "factor") for f in self.factors]
        if not 2 <= len(self.factors) <= MAX_MODES:
            raise InputError(f"need between 2 and {MAX_MODES} factor matrices")
        r = len(self.weights)
        for f in self.factors:
            if f.ndim != 2 or f.shape[1] != r:
                raise InputError(f"factor shape {f.shape} does not match rank {r}")
            if f.shape[0] < 1:
                raise InputError("factor matrices need at least one row")
        active = self.weights != 0.0
        if active.any():
            for f in self.factors:
                norms = np.linalg.norm(f[:, active], axis=0)
                if np.abs(norms - 1.0).max() > UNIT_NORM_TOL:
                    raise InputError(
                        "columns of active components must have unit 2-norm"
                    )

    @property
    def rank(self) -> int:
        return len(self.weights)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.weights))

    @classmethod
    def empty(cls, shape: Sequence[int]) -> "CpModel":
        shape = _check_shape(shape)
        return cls(np.zeros(0), [np.zeros((s, 0)) for s in shape])


def _check_same_shape(*shapes: tuple[int, ...]) -> None:
    first = shapes[0]
    for s in shapes[1:]:
        if s != first:
            raise InputError(f"shape mismatch: {first} vs {s}")


def tensor_from_entries(
    shape: Sequence[int],
    entries: Iterable[tuple[Sequence[int], float]],
) -> tuple[DenseTensor, ObservationMask]:
    """Build a tensor from sparse (index, value) pairs; unlisted cells are 0
    and marked unobserved."""
    shape = _check_shape(shape)
    vals = np.zeros(shape)
    flags = np.zeros(shape, dtype=bool)
    for idx, value in entries:
        idx = tuple(int(i) for i in idx)
        if len(idx) != len(shape) or any(
            not 0 <= i < s for i, s in zip(idx, shape)
        ):
            raise InputError(f"index {idx} out of range for shape {shape}")
        if flags[idx]:
            raise InputError(f"duplicate index {idx}")
        flags[idx] = True
        vals[idx] = float(value)
    return DenseTensor(vals), ObservationMask(flags)


def _check_vectors(
    t: DenseTensor, vectors: Sequence[np.ndarray], modes: Sequence[int]
) -> list[np.ndarray]:
    if len(vectors) != len(modes):
        raise InputError(f"expected {len(modes)} vectors, got {len(vectors)}")
    out = []
    for j, v in zip(modes, vectors):
        v = _as_float_array(v, "vector")
        if v.ndim != 1 or v.shape[0] != t.shape[j]:
            raise InputError(
                f"vector for mode {j} must have length {t.shape[j]}, got shape {v.shape}"
            )
        out.append(v)
    return out


def contract_all_but(
    t: DenseTensor, vectors: Sequence[np.ndarray], skip_mode: int
) -> np.ndarray:
    """Contract every mode except ``skip_mode`` with the given vectors.

    ``vectors`` are expected in increasing mode order, skipping ``skip_mode``.
    Returns a vector of length ``t.shape[skip_mode]``.
    """
    k = t.ndim
    if not 0 <= skip_mode < k:
        raise InputError(f"skip_mode {skip_mode} out of range for {k} modes")
    modes = [j for j in range(k) if j != skip_mode]
    vecs = _check_vectors(t, vectors, modes)
    letters = _MODE_LETTERS[:k]
    sub = (
        letters
        + ","
        + ",".join(letters[j] for j in modes)
        + "->"
        + letters[skip_mode]
    )
    return np.einsum(sub, t.values, *vecs, optimize=True)


def contract_all(t: DenseTensor, vectors: Sequence[np.ndarray]) -> float:
    """Full inner product of ``t`` with the rank-one tensor of the vectors."""
    k = t.ndim
    vecs = _check_vectors(t, vectors, list(range(k)))
    letters = _MODE_LETTERS[:k]
    sub = letters + "," + ",".join(letters) + "->"
    return float(np.einsum(sub, t.values, *vecs, optimize=True))


def _cp_sum(
    weights: np.ndarray, factors: Sequence[np.ndarray], shape: tuple[int, ...]
) -> np.ndarray:
    if len(weights) == 0:
        return np.zeros(shape)
    letters = _MODE_LETTERS[: len(shape)]
    sub = "r," + ",".join(c + "r" for c in letters) + "->" + letters
    return np.einsum(sub, weights, *factors, optimize=True)


def cp_reconstruct(m: CpModel, shape: Sequence[int]) -> DenseTensor:
    """Evaluate the model densely: t[i1..iK] = sum_r w_r * prod_k F_k[i_k, r]."""
    shape = _check_shape(shape)
    if m.shape != shape:
        raise InputError(f"model shape {m.shape} does not match {shape}")
    return DenseTensor(_cp_sum(m.weights, m.factors, shape))


def project_replace(
    target: DenseTensor, mask: ObservationMask, source: DenseTensor
) -> DenseTensor:
    """Take ``source`` where the mask is true and ``target`` elsewhere."""
    _check_same_shape(target.shape, mask.shape, source.shape)
    return DenseTensor(np.where(mask.flags, source.values, target.values))


def sq_frobenius_diff(
    a: DenseTensor, b: DenseTensor, restrict: ObservationMask | None = None
) -> float:
    """Squared Frobenius distance, optionally restricted to masked cells."""
    _check_same_shape(a.shape, b.shape)
    d = a.values - b.values
    if restrict is not None:
        _check_same_shape(a.shape, restrict.shape)
        d = d[restrict.flags]
    return float(np.sum(d * d))
