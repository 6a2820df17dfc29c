"""Dense tensor algebra: unfoldings, contractions, Hadamard products, masks.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order, so the
last index varies fastest in every linearization used below.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np


def as_tensor(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite float64 array, raising on NaN/Inf."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 0:
        raise ValueError(f"{name} must have at least one mode")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def _check_mode(ndim: int, m: int) -> int:
    m = int(m)
    if not 1 <= m <= ndim - 1:
        raise ValueError(f"mode m={m} out of range [1, {ndim - 1}]")
    return m


def unfold(X: np.ndarray, m: int) -> np.ndarray:
    """The m-th unfolding, of shape ``(I_1...I_m, I_{m+1}...I_N)``.

    ``m`` counts modes from 1, so it is also the number of row modes.
    """
    X = np.asarray(X)
    m = _check_mode(X.ndim, m)
    rows = int(np.prod(X.shape[:m]))
    return X.reshape(rows, -1)


def fold(M: np.ndarray, shape: Sequence[int], m: int) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    M = np.asarray(M)
    shape = tuple(int(s) for s in shape)
    m = _check_mode(len(shape), m)
    expected = (int(np.prod(shape[:m])), int(np.prod(shape[m:])))
    if M.shape != expected:
        raise ValueError(f"matrix of shape {M.shape} cannot fold to {shape} at m={m}; need {expected}")
    return M.reshape(shape)


def mode_contract(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Contract the last mode of ``X`` with the first mode of ``Y``."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[-1] != Y.shape[0]:
        raise ValueError(f"inner extents differ: {X.shape[-1]} != {Y.shape[0]}")
    return np.tensordot(X, Y, axes=(X.ndim - 1, 0))


def hadamard(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Entrywise product of same-shaped tensors."""
    factors = [np.asarray(f) for f in factors]
    if not factors:
        raise ValueError("hadamard needs at least one factor")
    shape = factors[0].shape
    for f in factors[1:]:
        if f.shape != shape:
            raise ValueError(f"shape mismatch in hadamard: {f.shape} != {shape}")
    if len(factors) == 1:
        return factors[0]
    return reduce(np.multiply, factors)


def inner(X: np.ndarray, Y: np.ndarray) -> float:
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} != {Y.shape}")
    return float(np.dot(X.ravel(), Y.ravel()))


def norm(X: np.ndarray, kind: str = "fro", p: float | None = None) -> float:
    """Frobenius norm (``kind="fro"``) or entrywise l_p norm (``kind="lp"``)."""
    x = np.asarray(X, dtype=np.float64).ravel()
    if kind in ("fro", "frobenius"):
        return float(np.linalg.norm(x))
    if kind == "lp":
        if p is None or p <= 0:
            raise ValueError("l_p norm needs p > 0")
        return float(np.sum(np.abs(x) ** p) ** (1.0 / p))
    raise ValueError(f"unknown norm kind {kind!r}")


class ObservationSet:
    """Set of observed zero-based multi-indices of a tensor of fixed shape.

    Stored as a boolean mask; ``indices`` gives the multi-indices in
    row-major order.
    """

    def __init__(self, shape: Sequence[int], mask: np.ndarray):
        self.shape = tuple(int(s) for s in shape)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.shape:
            raise ValueError(f"mask shape {mask.shape} does not match {self.shape}")
        self.mask = mask
        self.mask.setflags(write=False)

    @classmethod
    def from_indices(cls, shape: Sequence[int], indices) -> "ObservationSet":
        shape = tuple(int(s) for s in shape)
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, len(shape))
        if idx.size and (np.any(idx < 0) or np.any(idx >= np.array(shape))):
            raise ValueError("observation index out of bounds")
        mask = np.zeros(shape, dtype=bool)
        if len(idx):
            flat = np.ravel_multi_index(tuple(idx.T), shape)
            if len(np.unique(flat)) != len(flat):
                raise ValueError("duplicate observation indices")
            mask.ravel()[flat] = True
        return cls(shape, mask)

    @classmethod
    def full(cls, shape: Sequence[int]) -> "ObservationSet":
        return cls(shape, np.ones(tuple(shape), dtype=bool))

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def indices(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.mask, other.mask))

    def __repr__(self) -> str:
        return f"ObservationSet(shape={self.shape}, n_observed={len(self)})"


def apply_mask(X: np.ndarray, obs: ObservationSet) -> np.ndarray:
    """Sampling map: keep observed entries, zero the rest."""
    X = np.asarray(X)
    if X.shape != obs.shape:
        raise ValueError(f"observation set shape {obs.shape} does not match tensor {X.shape}")
    return np.where(obs.mask, X, 0.0)
