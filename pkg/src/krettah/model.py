"""The kernel-regression model over Hadamard-overparametrized TT factors.

The estimate is ``X = (U_1 * ... * U_P) x K x (V_1 * ... * V_Q)`` where ``*``
is the Hadamard product and ``x`` contracts adjacent modes. Each ``U_p`` has
shape ``(I_1, ..., I_m, N_l)`` and each ``V_q`` shape ``(N_l, I_{m+1}, ...,
I_N)``; all of them are TT-tensors of fixed rank.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .graph import IncidencePair, prior_gradient, prior_value
from .tensor import ObservationSet, fold, hadamard, unfold
from .tt import TTTangent, canonical_forms, project_tangent


@dataclass
class Hyperparams:
    lambda1: float = 1e-3
    lambda2: float = 1e-3
    lambda_l: float = 0.0
    lambda_u: float = 0.0
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 1e-4
    eps: float = 1e-4
    max_iters: int = 500
    max_backtracks: int = 50
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("lambda1", "lambda2", "lambda_l", "lambda_u"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for name in ("beta", "gamma"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1 or self.max_backtracks < 0:
            raise ValueError("max_iters must be >= 1 and max_backtracks >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True, eq=False)
class ModelState:
    U: tuple
    V: tuple
    mode: int
    K: np.ndarray

    def __post_init__(self):
        U, V = tuple(self.U), tuple(self.V)
        if not U or not V:
            raise ValueError("need at least one U and one V factor")
        if len({u.shape for u in U}) != 1 or len({u.ranks for u in U}) != 1:
            raise ValueError("all U factors must share shape and rank")
        if len({v.shape for v in V}) != 1 or len({v.ranks for v in V}) != 1:
            raise ValueError("all V factors must share shape and rank")
        K = np.asarray(self.K, dtype=np.float64)
        nl = K.shape[0]
        if K.shape != (nl, nl) or U[0].shape[-1] != nl or V[0].shape[0] != nl:
            raise ValueError("factor landmark extents must match the kernel matrix")
        if U[0].ndim != self.mode + 1:
            raise ValueError(f"U factors have order {U[0].ndim}, mode {self.mode} needs {self.mode + 1}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "K", K)

    @property
    def P(self) -> int:
        return len(self.U)

    @property
    def Q(self) -> int:
        return len(self.V)

    @property
    def shape(self) -> tuple:
        return self.U[0].shape[:-1] + self.V[0].shape[1:]

    @property
    def factors(self) -> tuple:
        return self.U + self.V

    def replace(self, factors) -> "ModelState":
        factors = tuple(factors)
        return ModelState(factors[: self.P], factors[self.P:], self.mode, self.K)


def _dense(state: ModelState):
    Us = [u.full() for u in state.U]
    Vs = [v.full() for v in state.V]
    return Us, Vs


def _assemble_dense(Us, Vs, K) -> np.ndarray:
    U = hadamard(Us)
    V = hadamard(Vs)
    nl = K.shape[0]
    Xm = U.reshape(-1, nl) @ K @ V.reshape(nl, -1)
    return Xm.reshape(U.shape[:-1] + V.shape[1:])


def assemble(state: ModelState) -> np.ndarray:
    Us, Vs = _dense(state)
    return _assemble_dense(Us, Vs, state.K)


def hadamard_products(state: ModelState):
    """The dense products ``U = U_1 * ... * U_P`` and ``V = V_1 * ... * V_Q``."""
    Us, Vs = _dense(state)
    return hadamard(Us), hadamard(Vs)


def _check(state, Y, obs):
    if Y.shape != state.shape:
        raise ValueError(f"data shape {Y.shape} does not match model shape {state.shape}")
    if obs.shape != Y.shape:
        raise ValueError("observation set shape does not match data")


class Objective:
    """Loss and gradients for fixed data, mask, kernel and hyperparameters."""

    def __init__(self, Y, obs: ObservationSet, B: IncidencePair | None, h: Hyperparams):
        self.Y = np.asarray(Y, dtype=np.float64)
        self.obs = obs
        self.mask = obs.mask
        self.Y_obs = np.where(self.mask, self.Y, 0.0)
        self.B = B
        self.h = h
        self.use_prior = B is not None and (h.lambda_l > 0 or h.lambda_u > 0)

    def value(self, state: ModelState, Us=None, Vs=None, return_X: bool = False):
        _check(state, self.Y, self.obs)
        if Us is None:
            Us, Vs = _dense(state)
        X = _assemble_dense(Us, Vs, state.K)
        h = self.h
        R = np.where(self.mask, X, 0.0) - self.Y_obs
        val = 0.5 * float(np.vdot(R, R))
        if self.use_prior:
            val += prior_value(unfold(X, 1), self.B, h.lambda_l, h.lambda_u)
        val += 0.5 * h.lambda1 * sum(float(np.vdot(u, u)) for u in Us)
        val += 0.5 * h.lambda2 * sum(float(np.vdot(v, v)) for v in Vs)
        return (val, X) if return_X else val

    def grads(self, state: ModelState, Us=None, Vs=None, X=None):
        """Ambient gradients with respect to every dense U_p, then every V_q."""
        _check(state, self.Y, self.obs)
        if Us is None:
            Us, Vs = _dense(state)
        K = state.K
        nl = K.shape[0]
        m = state.mode
        if X is None:
            X = _assemble_dense(Us, Vs, K)
        h = self.h
        G = np.where(self.mask, X - self.Y, 0.0)
        if self.use_prior:
            G = G + fold(prior_gradient(unfold(X, 1), self.B, h.lambda_l, h.lambda_u), X.shape, 1)
        U = hadamard(Us)
        V = hadamard(Vs)
        Gm = unfold(G, m)
        dU = (Gm @ (K @ V.reshape(nl, -1)).T).reshape(U.shape)
        dV = ((U.reshape(-1, nl) @ K).T @ Gm).reshape(V.shape)
        gU = [dU * _others(Us, p) + h.lambda1 * Us[p] for p in range(len(Us))]
        gV = [dV * _others(Vs, q) + h.lambda2 * Vs[q] for q in range(len(Vs))]
        return gU + gV


def _others(arrs, skip):
    rest = [a for i, a in enumerate(arrs) if i != skip]
    return hadamard(rest) if rest else 1.0


def loss(state: ModelState, Y, obs: ObservationSet, B: IncidencePair | None, h: Hyperparams) -> float:
    return Objective(Y, obs, B, h).value(state)


def euclidean_grads(state: ModelState, Y, obs: ObservationSet, B: IncidencePair | None, h: Hyperparams) -> list:
    return Objective(Y, obs, B, h).grads(state)


def riemannian_grad(state: ModelState, ambient_grads, forms=None) -> list[TTTangent]:
    """Project each ambient gradient onto the tangent space of its factor."""
    factors = state.factors
    if len(ambient_grads) != len(factors):
        raise ValueError("need one ambient gradient per factor")
    if forms is None:
        forms = [canonical_forms(f) for f in factors]
    return [project_tangent(f, g, fm) for f, g, fm in zip(factors, ambient_grads, forms)]


def factor_norms(state: ModelState) -> tuple:
    return tuple(float(np.linalg.norm(f.full())) for f in state.factors)


def n_parameters(state: ModelState) -> int:
    return sum(f.size for f in state.factors)

