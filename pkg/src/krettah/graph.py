"""Graph topology, incidence matrices and the divergence/curl prior."""
from __future__ import annotations

from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp


class Graph:
    """Undirected graph with canonically oriented edges ``(i, j)``, ``i < j``.

    Edge order follows the input; triangles are derived, never supplied.
    """

    def __init__(self, num_nodes: int, edges: Sequence[Sequence[int]]):
        self.num_nodes = int(num_nodes)
        if self.num_nodes < 1:
            raise ValueError("graph needs at least one node")
        canon = []
        seen = set()
        for e in edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i}, {j}) references a missing node")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        self.edges = canon
        self.edge_index = {e: k for k, e in enumerate(canon)}
        self.triangles = enumerate_triangles(self)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def __repr__(self) -> str:
        return f"Graph(N0={self.num_nodes}, N1={self.n_edges}, N2={self.n_triangles})"


class IncidencePair(NamedTuple):
    B1: sp.csr_array
    B2: sp.csr_array


def enumerate_triangles(g: Graph) -> list:
    """All 3-cliques ``(m, n, p)`` with ``m < n < p``, sorted."""
    adj = [set() for _ in range(g.num_nodes)]
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    tris = []
    for i, j in g.edges:
        for k in adj[i] & adj[j]:
            if k > j:
                tris.append((i, j, k))
    return sorted(tris)


def brute_force_triangles(g: Graph) -> list:
    es = set(g.edges)
    return [t for t in combinations(range(g.num_nodes), 3)
            if (t[0], t[1]) in es and (t[1], t[2]) in es and (t[0], t[2]) in es]


def build_b1(g: Graph) -> sp.csr_array:
    """Node-to-edge incidence: -1 at the tail, +1 at the head of each edge."""
    n1 = g.n_edges
    rows = np.array([e[k] for e in g.edges for k in (0, 1)], dtype=np.int64)
    cols = np.repeat(np.arange(n1), 2)
    vals = np.tile(np.array([-1, 1], dtype=np.int64), n1)
    return sp.csr_array((vals, (rows, cols)), shape=(g.num_nodes, n1))


def build_b2(g: Graph) -> sp.csr_array:
    """Edge-to-triangle incidence for the traversal m -> n -> p -> m."""
    rows, cols, vals = [], [], []
    for t, (m, n, p) in enumerate(g.triangles):
        for e, sign in (((m, n), 1), ((n, p), 1), ((m, p), -1)):
            if e not in g.edge_index:
                raise ValueError(f"triangle edge {e} missing from edge list")
            rows.append(g.edge_index[e])
            cols.append(t)
            vals.append(sign)
    return sp.csr_array((np.array(vals, dtype=np.int64), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
                        shape=(g.n_edges, g.n_triangles))


def incidence(g: Graph) -> IncidencePair:
    return IncidencePair(build_b1(g), build_b2(g))


def _check_rows(X1: np.ndarray, B: IncidencePair) -> np.ndarray:
    X1 = np.asarray(X1, dtype=np.float64)
    if X1.ndim == 1:
        X1 = X1[:, None]
    if X1.shape[0] != B.B1.shape[1]:
        raise ValueError(f"first unfolding has {X1.shape[0]} rows, graph has {B.B1.shape[1]} edges")
    return X1


def prior_value(X1, B: IncidencePair, lambda_l: float, lambda_u: float) -> float:
    X1 = _check_rows(X1, B)
    val = 0.0
    if lambda_l:
        val += 0.5 * lambda_l * float(np.sum((B.B1 @ X1) ** 2))
    if lambda_u and B.B2.shape[1]:
        val += 0.5 * lambda_u * float(np.sum((B.B2.T @ X1) ** 2))
    return val


def prior_gradient(X1, B: IncidencePair, lambda_l: float, lambda_u: float) -> np.ndarray:
    """Gradient of :func:`prior_value` with respect to ``X1``."""
    X1 = _check_rows(X1, B)
    G = np.zeros_like(X1)
    if lambda_l:
        G += lambda_l * (B.B1.T @ (B.B1 @ X1))
    if lambda_u and B.B2.shape[1]:
        G += lambda_u * (B.B2 @ (B.B2.T @ X1))
    return G
