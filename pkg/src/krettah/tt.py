"""Tensor trains and the geometry of fixed-TT-rank manifolds.

Cores are order-3 arrays ``(r_{k-1}, I_k, r_k)`` with ``r_0 = r_N = 1``.
Tangent vectors at a point use the usual gauged parametrization: with
``L_k`` the left-orthogonal cores and ``R_k`` the right-orthogonal cores of
the base point,

    xi = sum_k  L_1 ... L_{k-1} dU_k R_{k+1} ... R_N,

where for ``k < N`` the left unfolding of ``dU_k`` is orthogonal to that of
``L_k``. The summands are mutually orthogonal, so inner products of tangent
vectors at the same point reduce to sums over core inner products.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import as_tensor, unfold

logger = logging.getLogger(__name__)

#: relative singular-value threshold used for numerical TT-rank
RANK_TOL = 1e-10
#: singular-value floor (relative) used when repairing a degenerate truncation
REPAIR_FLOOR = 1e-9


class RankDeficientError(ValueError):
    """A tensor train does not realize its declared TT-rank."""


@dataclass(frozen=True, eq=False)
class TTTensor:
    cores: tuple

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=np.float64) for c in self.cores)
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {k} has order {c.ndim}, expected 3")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"core {k} right rank {cores[k].shape[2]} != core {k + 1} left rank {cores[k + 1].shape[0]}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def size(self) -> int:
        return sum(c.size for c in self.cores)

    def full(self) -> np.ndarray:
        return tt_full(self)

    def __repr__(self) -> str:
        return f"TTTensor(shape={self.shape}, ranks={self.ranks})"


@dataclass(frozen=True, eq=False)
class TTTangent:
    """Tangent vector at ``base`` (left-orthogonal form).

    ``right`` holds the right-orthogonal cores of the same point; only
    ``right[1:]`` is used.
    """

    base: TTTensor
    right: tuple
    deltas: tuple

    @property
    def shape(self) -> tuple:
        return self.base.shape

    def scaled(self, c: float) -> "TTTangent":
        return TTTangent(self.base, self.right, tuple(c * d for d in self.deltas))

    def __add__(self, other: "TTTangent") -> "TTTangent":
        if other.base is not self.base:
            raise ValueError("tangent vectors live at different base points")
        return TTTangent(self.base, self.right, tuple(a + b for a, b in zip(self.deltas, other.deltas)))

    def __neg__(self) -> "TTTangent":
        return self.scaled(-1.0)


# ---------------------------------------------------------------------------
# rank vectors


def check_rank_vector(ranks: Sequence[int], ndim: int) -> tuple:
    r = tuple(int(x) for x in ranks)
    if len(r) != ndim + 1:
        raise ValueError(f"rank vector {r} must have {ndim + 1} entries")
    if r[0] != 1 or r[-1] != 1:
        raise ValueError(f"rank vector {r} must start and end with 1")
    if any(x < 1 for x in r):
        raise ValueError(f"rank vector {r} has non-positive entries")
    return r


def check_nonempty(ranks: Sequence[int], shape: Sequence[int]) -> None:
    """Raise if the fixed-rank manifold for ``ranks`` and ``shape`` is empty."""
    r = check_rank_vector(ranks, len(shape))
    for k in range(1, len(shape) + 1):
        I = shape[k - 1]
        if r[k - 1] > I * r[k] or r[k] > I * r[k - 1]:
            raise ValueError(
                f"TT-rank {r} infeasible for shape {tuple(shape)} at k={k}: "
                f"need r_{k - 1} <= I_{k} r_{k} and r_{k} <= I_{k} r_{k - 1}"
            )


def uniform_ranks(r: int, shape: Sequence[int]) -> tuple:
    """Rank vector ``(1, r, ..., r, 1)`` with each entry capped at the maximal
    TT-rank of its unfolding, so the manifold is never empty."""
    shape = tuple(shape)
    out = [1]
    for k in range(1, len(shape)):
        cap = min(int(np.prod(shape[:k])), int(np.prod(shape[k:])))
        out.append(max(1, min(int(r), cap)))
    out.append(1)
    return tuple(out)


def manifold_dim(ranks: Sequence[int], shape: Sequence[int]) -> int:
    check_nonempty(ranks, shape)
    r = tuple(int(x) for x in ranks)
    N = len(shape)
    return sum(r[k - 1] * shape[k - 1] * r[k] for k in range(1, N + 1)) - sum(r[k] ** 2 for k in range(1, N))


# ---------------------------------------------------------------------------
# basic operations


def _svd(A: np.ndarray):
    """Thin SVD with the largest-magnitude entry of each left singular vector
    made nonnegative."""
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if u.size:
        rows = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[rows, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        u = u * signs
        vt = vt * signs[:, None]
    return u, s, vt


def _qr(A: np.ndarray):
    q, r = np.linalg.qr(A)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d, r * d[:, None]


def tt_full(A: TTTensor) -> np.ndarray:
    out = A.cores[0].reshape(A.cores[0].shape[1], -1)
    for core in A.cores[1:]:
        r = core.shape[0]
        out = out.reshape(-1, r) @ core.reshape(r, -1)
    return out.reshape(A.shape)


def random_tt(shape: Sequence[int], ranks: Sequence[int], rng=None) -> TTTensor:
    """TT-tensor with independent standard-normal cores."""
    rng = np.random.default_rng(rng)
    r = check_rank_vector(ranks, len(shape))
    return TTTensor(tuple(rng.standard_normal((r[k], shape[k], r[k + 1])) for k in range(len(shape))))


def tt_svd(X, rmax: Sequence[int] | None = None, tol: float = 0.0, return_tail: bool = False):
    """TT-SVD of a dense tensor.

    Ranks are capped by ``rmax`` and, when ``tol > 0``, singular values below
    ``tol`` times the largest one at each step are dropped. With
    ``return_tail=True`` also returns ``sqrt(sum of squared discarded singular
    values)``, an upper bound on the Frobenius reconstruction error.
    """
    X = as_tensor(X)
    shape = X.shape
    N = X.ndim
    if rmax is None:
        rmax = (1,) + (np.iinfo(np.int64).max,) * (N - 1) + (1,)
    rmax = check_rank_vector(rmax, N)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    cores = []
    tail2 = 0.0
    C = X
    r_prev = 1
    for k in range(N - 1):
        u, s, vt = _svd(C.reshape(r_prev * shape[k], -1))
        r = min(rmax[k + 1], len(s))
        if tol > 0 and s[0] > 0:
            r = min(r, max(1, int(np.sum(s > tol * s[0]))))
        tail2 += float(np.sum(s[r:] ** 2))
        cores.append(u[:, :r].reshape(r_prev, shape[k], r))
        C = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(C.reshape(r_prev, shape[-1], 1))
    out = TTTensor(tuple(cores))
    return (out, float(np.sqrt(tail2))) if return_tail else out


def tt_rank(X, tol: float = RANK_TOL) -> tuple:
    """Numerical TT-rank: singular values above ``tol`` times the largest."""
    X = np.asarray(X, dtype=np.float64)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    ranks = [1]
    for k in range(1, X.ndim):
        s = np.linalg.svd(unfold(X, k), compute_uv=False)
        ranks.append(int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0)
    ranks.append(1)
    return tuple(ranks)


def orthogonalize(A: TTTensor, direction: str = "left") -> TTTensor:
    """Left form: cores 1..N-1 have orthonormal left unfoldings.
    Right form: cores 2..N have orthonormal right unfoldings."""
    cores = list(A.cores)
    N = len(cores)
    if direction == "left":
        for k in range(N - 1):
            r0, I, r1 = cores[k].shape
            q, R = _qr(cores[k].reshape(r0 * I, r1))
            cores[k] = q.reshape(r0, I, q.shape[1])
            cores[k + 1] = np.tensordot(R, cores[k + 1], axes=(1, 0))
    elif direction == "right":
        for k in range(N - 1, 0, -1):
            r0, I, r1 = cores[k].shape
            q, R = _qr(cores[k].reshape(r0, I * r1).T)
            cores[k] = q.T.reshape(q.shape[1], I, r1)
            cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    else:
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    return TTTensor(tuple(cores))


def tt_round(A: TTTensor, ranks: Sequence[int], repair: bool = False, return_info: bool = False):
    """Truncate a TT-tensor to ``ranks`` without forming the dense tensor.

    Equivalent to ``tt_svd(tt_full(A), ranks)``. With ``repair=True`` bond
    singular values that fall below ``RANK_TOL`` (relative) are lifted to
    ``REPAIR_FLOOR`` so the result realizes ``ranks`` exactly.
    """
    ranks = check_rank_vector(ranks, A.ndim)
    cores = list(orthogonalize(A, "right").cores)
    N = len(cores)
    repaired = False
    for k in range(N - 1):
        r0, I, r1 = cores[k].shape
        u, s, vt = _svd(cores[k].reshape(r0 * I, r1))
        r = min(ranks[k + 1], len(s))
        s = s[:r].copy()
        if repair:
            scale = s[0] if s[0] > 0 else 1.0
            low = s <= RANK_TOL * scale
            if np.any(low) or r < ranks[k + 1]:
                repaired = True
                s[low] = REPAIR_FLOOR * scale
                if r < ranks[k + 1]:
                    raise RankDeficientError(f"bond {k + 1} admits at most rank {r} < {ranks[k + 1]}")
        cores[k] = u[:, :r].reshape(r0, I, r)
        cores[k + 1] = np.tensordot(s[:, None] * vt[:r], cores[k + 1], axes=(1, 0))
    if repaired:
        logger.debug("degenerate truncation repaired at ranks %s", ranks)
    out = TTTensor(tuple(cores))
    return (out, repaired) if return_info else out


def tt_add(A: TTTensor, B: TTTensor) -> TTTensor:
    """Block-diagonal TT representation of ``A + B`` (ranks add)."""
    if A.shape != B.shape:
        raise ValueError("shape mismatch")
    N = A.ndim
    if N == 1:
        return TTTensor((A.cores[0] + B.cores[0],))
    cores = [np.concatenate([A.cores[0], B.cores[0]], axis=2)]
    for k in range(1, N - 1):
        a, b = A.cores[k], B.cores[k]
        c = np.zeros((a.shape[0] + b.shape[0], a.shape[1], a.shape[2] + b.shape[2]))
        c[: a.shape[0], :, : a.shape[2]] = a
        c[a.shape[0] :, :, a.shape[2] :] = b
        cores.append(c)
    cores.append(np.concatenate([A.cores[-1], B.cores[-1]], axis=0))
    return TTTensor(tuple(cores))


# ---------------------------------------------------------------------------
# tangent geometry


def canonical_forms(A: TTTensor, tol: float = RANK_TOL):
    """Left- and right-orthogonal cores of ``A`` plus bond singular values.

    The right form is obtained by sweeping back over the left form; the R
    factor of each step then has the singular values of the corresponding
    unfolding of ``A``. Raises :class:`RankDeficientError` if a bond does not
    realize the declared rank.
    """
    left = orthogonalize(A, "left")
    cores = list(left.cores)
    N = len(cores)
    svals = [None] * (N - 1)
    for k in range(N - 1, 0, -1):
        r0, I, r1 = cores[k].shape
        M = cores[k].reshape(r0, I * r1)
        if M.shape[1] < r0:
            raise RankDeficientError(f"bond {k} cannot realize rank {r0}")
        q, R = _qr(M.T)
        s = np.linalg.svd(R, compute_uv=False)
        svals[k - 1] = s
        if s[0] == 0 or s[-1] <= tol * s[0] or len(s) < A.ranks[k]:
            raise RankDeficientError(f"bond {k} realizes rank below declared {A.ranks[k]}")
        cores[k] = q.T.reshape(q.shape[1], I, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    return left, tuple(cores), svals


def _interfaces(left_cores, right_cores):
    N = len(left_cores)
    lefts = [np.ones((1, 1))]
    for k in range(N - 1):
        c = left_cores[k]
        lefts.append((lefts[-1] @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2]))
    rights = [None] * (N + 1)
    rights[N] = np.ones((1, 1))
    for k in range(N - 1, 0, -1):
        c = right_cores[k]
        rights[k] = (c.reshape(-1, c.shape[2]) @ rights[k + 1]).reshape(c.shape[0], -1)
    # lefts[k]: (I_1..I_k, r_k); rights[k]: (r_{k-1}, I_k..I_N) (0-based core k)
    return lefts, rights


def project_tangent(base: TTTensor, Z, forms=None) -> TTTangent:
    """Orthogonal projection of the dense tensor ``Z`` onto the tangent space
    at ``base``. ``forms`` may carry a precomputed :func:`canonical_forms`."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != base.shape:
        raise ValueError(f"Z shape {Z.shape} does not match base shape {base.shape}")
    left, right, _ = forms if forms is not None else canonical_forms(base)
    lefts, rights = _interfaces(left.cores, right)
    shape = base.shape
    N = len(shape)
    deltas = []
    for k in range(N):
        lm = lefts[k]
        rm = rights[k + 1]
        Zk = (lm.T @ Z.reshape(lm.shape[0], -1)).reshape(-1, rm.shape[1])
        D = (Zk @ rm.T).reshape(lm.shape[1], shape[k], rm.shape[0])
        if k < N - 1:
            Lk = left.cores[k].reshape(-1, left.cores[k].shape[2])
            Dm = D.reshape(-1, D.shape[2])
            D = (Dm - Lk @ (Lk.T @ Dm)).reshape(D.shape)
        deltas.append(D)
    return TTTangent(left, right, tuple(deltas))


def _tangent_tt(xi: TTTangent, step: float, include_base: bool) -> TTTensor:
    """TT representation (interior ranks 2r) of ``base + step * xi`` or of
    ``step * xi`` alone."""
    L = xi.base.cores
    R = xi.right
    D = xi.deltas
    N = len(L)
    if N == 1:
        c = step * D[0] + (L[0] if include_base else 0.0)
        return TTTensor((c,))
    cores = [np.concatenate([L[0], step * D[0]], axis=2)]
    for k in range(1, N - 1):
        r0, I, r1 = L[k].shape
        c = np.zeros((2 * r0, I, 2 * r1))
        c[:r0, :, :r1] = L[k]
        c[:r0, :, r1:] = step * D[k]
        c[r0:, :, r1:] = R[k]
        cores.append(c)
    last = step * D[-1] + (L[-1] if include_base else 0.0)
    cores.append(np.concatenate([last, R[-1]], axis=0))
    return TTTensor(tuple(cores))


def tangent_to_ambient(xi: TTTangent) -> np.ndarray:
    return tt_full(_tangent_tt(xi, 1.0, include_base=False))


def tangent_inner(xi: TTTangent, eta: TTTangent) -> float:
    """Ambient inner product of two tangent vectors at the same point."""
    return float(sum(np.vdot(a, b) for a, b in zip(xi.deltas, eta.deltas)))


def retract(base: TTTensor, xi: TTTangent, step: float = 1.0, return_info: bool = False):
    """Retraction ``base + step * xi`` rounded back to the ranks of ``base``.

    Degenerate truncations are repaired (see :func:`tt_round`); with
    ``return_info=True`` returns ``(point, repaired)``.
    """
    if xi.base.shape != base.shape:
        raise ValueError("tangent vector shape does not match base")
    point, repaired = tt_round(_tangent_tt(xi, float(step), include_base=True), base.ranks, repair=True,
                               return_info=True)
    return (point, repaired) if return_info else point
