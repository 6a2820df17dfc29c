"""Riemannian gradient descent with Armijo backtracking on the product of
fixed-TT-rank manifolds."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .graph import IncidencePair
from .model import Hyperparams, ModelState, Objective, assemble, riemannian_grad
from .tensor import ObservationSet
from .tt import (TTTensor, canonical_forms, check_nonempty, orthogonalize, random_tt, retract,
                 tangent_inner)

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAILED = "line_search_failed"

LOG_FIELDS = ("iter", "loss", "grad_norm", "t", "step", "rel_change")


class IterRecord(NamedTuple):
    iter: int
    loss: float
    grad_norm: float
    t: int
    step: float
    rel_change: float


@dataclass
class SolveReport:
    initial_loss: float
    records: list = field(default_factory=list)
    reason: str = MAX_ITERS
    repairs: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> list:
        return [self.initial_loss] + [r.loss for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in self.records:
            w.writerow([r.iter, repr(r.loss), repr(r.grad_norm), r.t, repr(r.step), repr(r.rel_change)])
        return buf.getvalue()


class SolveResult(NamedTuple):
    state: ModelState
    X_hat: np.ndarray
    report: SolveReport


def _scale_tt(A: TTTensor, c: float) -> TTTensor:
    cores = list(A.cores)
    cores[-1] = c * cores[-1]
    return TTTensor(tuple(cores))


def init_state(shape: Sequence[int], mode: int, rank_u, rank_v, P: int, Q: int, K,
               Y, obs: ObservationSet, seed=0) -> ModelState:
    """Random orthogonalized factors, jointly rescaled so the masked estimate
    has the same norm as the masked data."""
    shape = tuple(shape)
    K = np.asarray(K, dtype=np.float64)
    nl = K.shape[0]
    u_shape = shape[:mode] + (nl,)
    v_shape = (nl,) + shape[mode:]
    check_nonempty(rank_u, u_shape)
    check_nonempty(rank_v, v_shape)
    if P < 1 or Q < 1:
        raise ValueError("P and Q must be >= 1")
    rng = np.random.default_rng(seed)
    U = [orthogonalize(random_tt(u_shape, rank_u, rng), "left") for _ in range(P)]
    V = [orthogonalize(random_tt(v_shape, rank_v, rng), "left") for _ in range(Q)]
    state = ModelState(tuple(U), tuple(V), mode, K)
    target = float(np.linalg.norm(np.where(obs.mask, Y, 0.0)))
    current = float(np.linalg.norm(np.where(obs.mask, assemble(state), 0.0)))
    if target > 0 and current > 0:
        c = (target / current) ** (1.0 / (P + Q))
        state = state.replace(_scale_tt(f, c) for f in state.factors)
    return state


def armijo_backtrack(phi: Callable, f0: float, slope: float, alpha: float, beta: float, gamma: float,
                     max_backtracks: int):
    """Smallest ``t >= 0`` with ``f0 - phi(alpha beta^t)[0] >= gamma alpha beta^t slope``.

    ``phi(step)`` returns ``(value, payload)``; ``slope`` is the squared
    gradient norm. Returns ``(t, step, value, payload)`` or ``None`` when no
    ``t <= max_backtracks`` is accepted.
    """
    for t in range(max_backtracks + 1):
        step = alpha * beta**t
        value, payload = phi(step)
        if f0 - value >= gamma * step * slope:
            return t, step, value, payload
    return None


def armijo_search(state: ModelState, xi, objective: Objective, f0: float | None = None, forms=None):
    """Armijo search along ``-xi`` (a list of tangents, one per factor).

    Returns ``(t, candidate_state, candidate_loss, candidate_X, repaired)``,
    or ``None`` if the search fails.
    """
    h = objective.h
    if f0 is None:
        f0 = objective.value(state)
    slope = sum(tangent_inner(x, x) for x in xi)

    def phi(step):
        new, repaired = [], False
        for f, x in zip(state.factors, xi):
            pt, rep = retract(f, x, -step, return_info=True)
            new.append(pt)
            repaired |= rep
        cand = state.replace(new)
        value, X = objective.value(cand, return_X=True)
        return value, (cand, X, repaired)

    found = armijo_backtrack(phi, f0, slope, h.alpha, h.beta, h.gamma, h.max_backtracks)
    if found is None:
        return None
    t, _, value, (cand, X, repaired) = found
    return t, cand, value, X, repaired


def solve(Y, obs: ObservationSet, K, *, mode: int, rank_u, rank_v, P: int = 1, Q: int = 1,
          hyper: Hyperparams | None = None, incidence: IncidencePair | None = None,
          state: ModelState | None = None, callback: Callable | None = None) -> SolveResult:
    """Run the descent until the relative change of the estimate drops below
    ``hyper.eps`` or ``hyper.max_iters`` iterations have run."""
    h = hyper if hyper is not None else Hyperparams()
    Y = np.asarray(Y, dtype=np.float64)
    if state is None:
        state = init_state(Y.shape, mode, rank_u, rank_v, P, Q, K, Y, obs, seed=h.seed)
    obj = Objective(Y, obs, incidence, h)
    f, X = obj.value(state, return_X=True)
    report = SolveReport(initial_loss=f)
    # loss scale for deciding when a decrease is below rounding level
    fscale = f + 0.5 * float(np.vdot(obj.Y_obs, obj.Y_obs))
    for n in range(1, h.max_iters + 1):
        forms = [canonical_forms(fac) for fac in state.factors]
        grads = obj.grads(state, X=X)
        xi = riemannian_grad(state, grads, forms)
        slope = sum(tangent_inner(x, x) for x in xi)
        gnorm = float(np.sqrt(slope))
        if h.gamma * h.alpha * slope <= np.finfo(float).eps * fscale:
            # numerically stationary: no step can show the required decrease
            report.records.append(IterRecord(n, f, gnorm, 0, 0.0, 0.0))
            report.reason = CONVERGED
            break
        found = armijo_search(state, xi, obj, f0=f)
        if found is None:
            report.reason = LINE_SEARCH_FAILED
            logger.warning("line search failed at iteration %d", n)
            break
        t, cand, f_new, X_new, repaired = found
        report.repairs += int(repaired)
        denom = float(np.linalg.norm(X_new))
        diff = float(np.linalg.norm(X_new - X))
        rel = diff / denom if denom > 0 else (0.0 if diff == 0 else np.inf)
        step = h.alpha * h.beta**t
        report.records.append(IterRecord(n, f_new, gnorm, t, step, rel))
        state, X, f = cand, X_new, f_new
        if callback is not None:
            callback(n, state, report)
        logger.debug("iter %d loss %.6e |grad| %.3e t %d rel %.3e", n, f, gnorm, t, rel)
        if rel < h.eps:
            report.reason = CONVERGED
            break
    else:
        report.reason = MAX_ITERS
    return SolveResult(state, X, report)
