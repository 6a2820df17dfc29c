"""Synthetic dynamic edge flows and the per-time-instant sampling protocol."""
from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .graph import Graph, build_b1
from .tensor import ObservationSet, fold, unfold
from .tt import check_nonempty, random_tt, tt_full, uniform_ranks


class SamplingPlan(NamedTuple):
    ratio: float
    edges: np.ndarray  # (I2*I3, k) sorted edge indices observed at each time instant

    @property
    def per_instant(self) -> int:
        return self.edges.shape[1]


def edges_per_instant(n_edges: int, s: float) -> int:
    """``ceil(n_edges * s)``, computed on the decimal value of ``s`` so that
    e.g. ``10 * 0.3`` gives 3 rather than 4."""
    if not 0 < s <= 1:
        raise ValueError(f"sampling ratio must lie in (0, 1], got {s}")
    return math.ceil(n_edges * Fraction(repr(float(s))))


def make_sampling_plan(I1: int, I2: int, I3: int, s: float, seed=0):
    """Observe a uniformly random set of ``ceil(I1 s)`` edges per time instant.

    Time instants are the columns of the first unfolding, i.e. ``(i2, i3)``
    pairs in row-major order.
    """
    k = edges_per_instant(I1, s)
    rng = np.random.default_rng(seed)
    T = I2 * I3
    chosen = np.empty((T, k), dtype=np.int64)
    for t in range(T):
        chosen[t] = np.sort(rng.choice(I1, size=k, replace=False))
    mask1 = np.zeros((I1, T), dtype=bool)
    mask1[chosen, np.arange(T)[:, None]] = True
    obs = ObservationSet((I1, I2, I3), mask1.reshape(I1, I2, I3))
    return SamplingPlan(float(s), chosen), obs


def divergence_free_part(Y1: np.ndarray, B1) -> np.ndarray:
    """``Y1 - pinv(B1) B1 Y1`` via minimum-norm least squares."""
    B = B1.toarray() if hasattr(B1, "toarray") else np.asarray(B1)
    B = B.astype(np.float64)
    rhs = B @ Y1
    corr = np.linalg.lstsq(B, rhs, rcond=None)[0]
    return Y1 - corr


def gen_flow_tensor(g: Graph, I2: int, I3: int, rank=2, noise_level: float = 0.0,
                    div_weight: float = 0.0, seed=0) -> np.ndarray:
    """Low-TT-rank edge-flow tensor of shape ``(N1, I2, I3)``.

    ``rank`` is an int (uniform interior rank) or a full rank vector. The
    first unfolding is blended toward its divergence-free part with weight
    ``div_weight``; the planted tensor is scaled to unit RMS first, and white noise of relative size ``noise_level`` is added.
    """
    shape = (g.n_edges, int(I2), int(I3))
    ranks = uniform_ranks(rank, shape) if np.isscalar(rank) else tuple(rank)
    check_nonempty(ranks, shape)
    if not 0 <= div_weight <= 1:
        raise ValueError("div_weight must lie in [0, 1]")
    if noise_level < 0:
        raise ValueError("noise_level must be nonnegative")
    rng = np.random.default_rng(seed)
    Y = tt_full(random_tt(shape, ranks, rng))
    Y = Y / np.sqrt(np.mean(Y**2))  # unit RMS so solver step sizes transfer across sizes
    if div_weight > 0:
        Y1 = unfold(Y, 1)
        Y1 = (1 - div_weight) * Y1 + div_weight * divergence_free_part(Y1, build_b1(g))
        Y = fold(Y1, shape, 1)
    if noise_level > 0:
        E = rng.standard_normal(shape)
        Y = Y + noise_level * np.linalg.norm(Y) / np.linalg.norm(E) * E
    return Y


def random_graph(num_nodes: int, num_edges: int, seed=0, min_triangles: int = 1) -> Graph:
    """Connected random graph: a random spanning tree plus uniform extra edges.

    Redraws until at least ``min_triangles`` triangles exist.
    """
    max_edges = num_nodes * (num_nodes - 1) // 2
    if not num_nodes - 1 <= num_edges <= max_edges:
        raise ValueError(f"cannot build a connected graph with {num_nodes} nodes and {num_edges} edges")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        order = rng.permutation(num_nodes)
        edges = {tuple(sorted((int(order[i]), int(order[rng.integers(i)])))) for i in range(1, num_nodes)}
        while len(edges) < num_edges:
            i, j = rng.choice(num_nodes, size=2, replace=False)
            edges.add((min(int(i), int(j)), max(int(i), int(j))))
        g = Graph(num_nodes, sorted(edges))
        if g.n_triangles >= min_triangles:
            return g
    raise ValueError("could not draw a graph with enough triangles")
