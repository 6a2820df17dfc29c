"""Kernel regression over Hadamard-overparametrized tensor-train manifolds
for multi-way data imputation."""

__version__ = "0.1.0"

from .config import ConfigError, RunConfig
from .datagen import gen_flow_tensor, make_sampling_plan, random_graph
from .estimator import KReTTaHImputer
from .graph import Graph, incidence
from .kernel import KernelSpec
from .metrics import nrmse, nrmse_missing, sparsity_pct
from .model import Hyperparams, ModelState
from .optimizer import solve
from .tensor import ObservationSet
from .tt import TTTensor, tt_round, tt_svd

__all__ = [
    "ConfigError", "Graph", "Hyperparams", "KReTTaHImputer", "KernelSpec", "ModelState", "ObservationSet",
    "RunConfig", "TTTensor", "gen_flow_tensor", "incidence", "make_sampling_plan", "nrmse", "nrmse_missing",
    "random_graph", "solve", "sparsity_pct", "tt_round", "tt_svd",
]
