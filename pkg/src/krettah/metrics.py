"""Evaluation metrics."""
from __future__ import annotations

import numpy as np

from .tensor import ObservationSet


def nrmse(X_hat, Y) -> float:
    """Frobenius error relative to the ground-truth norm."""
    X_hat = np.asarray(X_hat, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X_hat.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X_hat.shape} != {Y.shape}")
    ny = np.linalg.norm(Y)
    if ny == 0:
        raise ValueError("ground truth is identically zero")
    return float(np.linalg.norm(X_hat - Y) / ny)


def nrmse_missing(X_hat, Y, obs: ObservationSet) -> float:
    """NRMSE restricted to the entries outside ``obs``."""
    X_hat = np.asarray(X_hat, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    miss = ~obs.mask
    if not miss.any():
        raise ValueError("no missing entries")
    return nrmse(X_hat[miss], Y[miss])


def sparsity_pct(T, threshold: float = 1e-3) -> float:
    """Percentage of entries with ``|entry| <= threshold`` after dividing by
    the largest magnitude."""
    a = np.abs(np.asarray(T, dtype=np.float64))
    top = a.max() if a.size else 0.0
    if top == 0:
        raise ValueError("sparsity is undefined for an all-zero tensor")
    return float(100.0 * np.count_nonzero(a / top <= threshold) / a.size)
