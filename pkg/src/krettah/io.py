"""Plain-text file formats for tensors, masks, graphs and TT checkpoints.

tensor:  ``shape I1 ... IN`` then row-major values, 17 significant digits
mask:    one line of N zero-based indices per observed entry
graph:   ``nodes N0`` then one ``i j`` line per undirected edge
tt:      ``tt N`` then per core ``core k r_prev I_k r_next`` and a line of values
"""
from __future__ import annotations

import os

import numpy as np

from .graph import Graph
from .tensor import ObservationSet
from .tt import TTTensor

FMT = "%.17g"


def _fmt_line(values) -> str:
    return " ".join(FMT % v for v in np.asarray(values, dtype=np.float64).ravel())


def write_tensor(path, X) -> None:
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w") as f:
        f.write("shape " + " ".join(str(s) for s in X.shape) + "\n")
        rows = X.reshape(-1, X.shape[-1]) if X.ndim > 1 else X.reshape(1, -1)
        for row in rows:
            f.write(_fmt_line(row) + "\n")


def read_tensor(path) -> np.ndarray:
    with open(path) as f:
        header = f.readline().split()
        if not header or header[0] != "shape":
            raise ValueError(f"{path}: first line must start with 'shape'")
        shape = tuple(int(s) for s in header[1:])
        values = np.array(f.read().split(), dtype=np.float64)
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {values.size}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: non-finite values")
    return values.reshape(shape)


def write_mask(path, obs: ObservationSet) -> None:
    with open(path, "w") as f:
        for idx in obs.indices:
            f.write(" ".join(str(int(i)) for i in idx) + "\n")


def read_mask(path, shape) -> ObservationSet:
    shape = tuple(shape)
    if os.path.getsize(path) == 0:
        return ObservationSet(shape, np.zeros(shape, dtype=bool))
    idx = np.loadtxt(path, dtype=np.int64, ndmin=2)
    if idx.shape[1] != len(shape):
        raise ValueError(f"{path}: mask rows have {idx.shape[1]} indices, tensor has {len(shape)} modes")
    return ObservationSet.from_indices(shape, idx)


def write_graph(path, g: Graph) -> None:
    with open(path, "w") as f:
        f.write(f"nodes {g.num_nodes}\n")
        for i, j in g.edges:
            f.write(f"{i} {j}\n")


def read_graph(path) -> Graph:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != "nodes":
            raise ValueError(f"{path}: first line must be 'nodes N0'")
        edges = [tuple(int(v) for v in line.split()) for line in f if line.strip()]
    if any(len(e) != 2 for e in edges):
        raise ValueError(f"{path}: edge lines must hold two node indices")
    return Graph(int(header[1]), edges)


def write_tt(path, A: TTTensor) -> None:
    with open(path, "w") as f:
        f.write(f"tt {A.ndim}\n")
        for k, c in enumerate(A.cores):
            f.write(f"core {k} {c.shape[0]} {c.shape[1]} {c.shape[2]}\n")
            f.write(_fmt_line(c) + "\n")


def read_tt(path) -> TTTensor:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 2 or head[0] != "tt":
        raise ValueError(f"{path}: first line must be 'tt N'")
    n = int(head[1])
    cores = []
    pos = 1
    for k in range(n):
        tag = lines[pos].split()
        if tag[0] != "core" or int(tag[1]) != k:
            raise ValueError(f"{path}: expected header for core {k}")
        shp = tuple(int(v) for v in tag[2:5])
        vals = np.array(lines[pos + 1].split(), dtype=np.float64)
        cores.append(vals.reshape(shp))
        pos += 2
    return TTTensor(tuple(cores))
