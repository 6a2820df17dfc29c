"""scikit-learn style front end for tensor imputation."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .graph import Graph, incidence
from .kernel import KernelSpec, build_kernel_matrix, build_navigators, select_landmarks
from .metrics import nrmse, sparsity_pct
from .model import Hyperparams, ModelState, hadamard_products
from .optimizer import solve
from .tensor import ObservationSet
from .tt import check_nonempty, check_rank_vector, uniform_ranks


def check_tensor_and_mask(X, mask=None):
    """Split a partially observed tensor into zero-filled data and an
    :class:`ObservationSet`.

    Without ``mask``, NaN entries are treated as missing. Observed entries
    must be finite.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 2:
        raise ValueError(f"expected a tensor with at least 2 modes, got {X.ndim}")
    if mask is None:
        obs = ObservationSet(X.shape, ~np.isnan(X))
    elif isinstance(mask, ObservationSet):
        obs = mask
    else:
        obs = ObservationSet(X.shape, np.asarray(mask, dtype=bool))
    if obs.shape != X.shape:
        raise ValueError(f"mask shape {obs.shape} does not match tensor shape {X.shape}")
    observed = X[obs.mask]
    if not np.all(np.isfinite(observed)):
        raise ValueError("observed entries must be finite")
    Y = np.where(obs.mask, X, 0.0)
    return Y, obs


def resolve_ranks(r, shape) -> tuple:
    """An int becomes ``(1, r, ..., r, 1)`` capped per unfolding; a vector is
    used verbatim."""
    if np.isscalar(r):
        return uniform_ranks(int(r), shape)
    ranks = check_rank_vector(r, len(shape))
    check_nonempty(ranks, shape)
    return ranks


class KReTTaHImputer(TransformerMixin, BaseEstimator):
    """Kernel regression over Hadamard-overparametrized tensor trains.

    Fitting is transductive: ``fit`` learns the completion of the tensor it
    is given and ``transform`` returns that completion.

    Parameters
    ----------
    n_landmarks : int
        Number of landmark navigators, the side of the kernel matrix.
    mode : int
        Unfolding mode ``m`` in ``[1, N-1]`` used for navigators and the
        regression split.
    P, Q : int
        Number of Hadamard factors of the left and right parameter tensors.
    rank_u, rank_v : int or sequence of int
        TT-ranks of the left/right factors. An int ``r`` means
        ``(1, r, ..., r, 1)`` capped by the unfolding sizes.
    kernel : str
        ``"gaussian"``, ``"polynomial"`` or ``"matern"``.
    graph : Graph, optional
        Edge graph for the divergence/curl prior (mode 1 indexes edges).
    keep_observed : bool
        If True, ``transform`` copies observed entries of its input through.
    """

    def __init__(self, n_landmarks=50, mode=1, P=1, Q=1, rank_u=8, rank_v=8, kernel="gaussian",
                 sigma=None, degree=2, offset=1.0, nu=1.5, lengthscale=None, lambda1=1e-3, lambda2=1e-3,
                 lambda_l=0.0, lambda_u=0.0, alpha=1.0, beta=0.5, gamma=1e-4, eps=1e-4, max_iter=500,
                 max_backtracks=50, graph=None, landmark_start=None, keep_observed=False, random_state=0):
        self.n_landmarks = n_landmarks
        self.mode = mode
        self.P = P
        self.Q = Q
        self.rank_u = rank_u
        self.rank_v = rank_v
        self.kernel = kernel
        self.sigma = sigma
        self.degree = degree
        self.offset = offset
        self.nu = nu
        self.lengthscale = lengthscale
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda_l = lambda_l
        self.lambda_u = lambda_u
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.eps = eps
        self.max_iter = max_iter
        self.max_backtracks = max_backtracks
        self.graph = graph
        self.landmark_start = landmark_start
        self.keep_observed = keep_observed
        self.random_state = random_state

    def _hyper(self) -> Hyperparams:
        seed = self.random_state if self.random_state is not None else 0
        return Hyperparams(lambda1=self.lambda1, lambda2=self.lambda2, lambda_l=self.lambda_l,
                           lambda_u=self.lambda_u, alpha=self.alpha, beta=self.beta, gamma=self.gamma,
                           eps=self.eps, max_iters=self.max_iter, max_backtracks=self.max_backtracks,
                           seed=int(seed))

    def _kernel_spec(self) -> KernelSpec:
        return KernelSpec(kind=self.kernel, sigma=self.sigma, degree=self.degree, offset=self.offset,
                          nu=self.nu, lengthscale=self.lengthscale)

    def fit(self, X, y=None, mask=None, init_factors=None):
        """Fit to a partially observed tensor.

        ``X`` holds NaN at missing entries unless ``mask`` (boolean array or
        :class:`ObservationSet`) is given. ``init_factors`` (P U-factors then
        Q V-factors, as TT-tensors) overrides the random initialization.
        """
        Y, obs = check_tensor_and_mask(X, mask)
        m = int(self.mode)
        if not 1 <= m <= Y.ndim - 1:
            raise ValueError(f"mode {m} out of range [1, {Y.ndim - 1}]")
        h = self._hyper()
        spec = self._kernel_spec()
        B = None
        if self.lambda_l > 0 or self.lambda_u > 0:
            if self.graph is None:
                raise ValueError("graph priors need a graph")
            if not isinstance(self.graph, Graph):
                raise TypeError("graph must be a krettah.graph.Graph")
            if self.graph.n_edges != Y.shape[0]:
                raise ValueError(f"graph has {self.graph.n_edges} edges, tensor mode 1 has {Y.shape[0]}")
            B = incidence(self.graph)

        navs = build_navigators(Y, m)
        self.landmarks_ = select_landmarks(navs, int(self.n_landmarks), self.landmark_start)
        self.kernel_spec_ = spec.resolved(self.landmarks_.points)
        self.kernel_matrix_ = build_kernel_matrix(self.landmarks_, self.kernel_spec_)
        nl = self.kernel_matrix_.shape[0]
        self.rank_u_ = resolve_ranks(self.rank_u, Y.shape[:m] + (nl,))
        self.rank_v_ = resolve_ranks(self.rank_v, (nl,) + Y.shape[m:])

        state = None
        if init_factors is not None:
            init_factors = list(init_factors)
            if len(init_factors) != int(self.P) + int(self.Q):
                raise ValueError(f"expected {int(self.P) + int(self.Q)} initial factors, got {len(init_factors)}")
            state = ModelState(tuple(init_factors[: int(self.P)]), tuple(init_factors[int(self.P):]), m,
                               self.kernel_matrix_)
            if state.U[0].ranks != self.rank_u_ or state.V[0].ranks != self.rank_v_:
                raise ValueError("initial factors do not have the configured TT-ranks")
        result = solve(Y, obs, self.kernel_matrix_, mode=m, rank_u=self.rank_u_, rank_v=self.rank_v_,
                       P=int(self.P), Q=int(self.Q), hyper=h, incidence=B, state=state)
        self.state_ = result.state
        self.report_ = result.report
        self.n_iter_ = result.report.iterations
        self.imputed_ = result.X_hat
        self.observation_set_ = obs
        return self

    def transform(self, X=None):
        """The fitted completion; with ``keep_observed`` and an ``X`` holding NaN
        at missing entries, observed entries of ``X`` are copied through."""
        check_is_fitted(self, "imputed_")
        out = self.imputed_.copy()
        if X is not None:
            X = np.asarray(X, dtype=np.float64)
            if X.shape != out.shape:
                raise ValueError(f"transform expects the fitted shape {out.shape}, got {X.shape}")
            if self.keep_observed:
                known = ~np.isnan(X)
                out[known] = X[known]
        return out

    def sparsity(self, threshold: float = 1e-3) -> tuple:
        """Sparsity percentages of the Hadamard products U and V."""
        check_is_fitted(self, "state_")
        U, V = hadamard_products(self.state_)
        return sparsity_pct(U, threshold), sparsity_pct(V, threshold)

    def score(self, X, y):
        """Negative NRMSE of the completion against the ground truth ``y``."""
        check_is_fitted(self, "imputed_")
        return -nrmse(self.imputed_, y)
