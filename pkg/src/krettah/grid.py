"""Exhaustive hyperparameter search with a resumable CSV results table."""
from __future__ import annotations

import csv
import itertools
import os
import time

import numpy as np
from joblib import Parallel, delayed

from .config import RunConfig, substream
from .estimator import KReTTaHImputer
from .graph import Graph
from .metrics import nrmse
from .tensor import ObservationSet

RESULT_FIELDS = ("config_id", "s", "seed", "lambda1", "lambda2", "lambda_l", "lambda_u", "Nl", "r1", "r2",
                 "P", "Q", "m", "kernel", "nrmse", "time_s", "sparsity_U", "sparsity_V", "iters")


def interior_rank(multiplier: int) -> int:
    """Interior TT-rank ``8 * multiplier`` as in the ``(1, 8r, ..., 8r, 1)`` grids."""
    return 8 * int(multiplier)


def expand_grid(grid: dict) -> list[dict]:
    if not grid:
        raise ValueError("empty grid")
    keys = list(grid)
    for k in keys:
        if not grid[k]:
            raise ValueError(f"grid axis {k!r} is empty")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def holdout_split(obs: ObservationSet, fraction: float, seed: int):
    """Split ``obs`` into disjoint training and validation sets."""
    idx = np.flatnonzero(obs.mask.ravel())
    rng = np.random.default_rng(seed)
    n_val = max(1, int(round(fraction * len(idx))))
    if n_val >= len(idx):
        raise ValueError("holdout leaves no training entries")
    val = rng.choice(idx, size=n_val, replace=False)
    vmask = np.zeros(obs.mask.size, dtype=bool)
    vmask[val] = True
    vmask = vmask.reshape(obs.shape)
    return ObservationSet(obs.shape, obs.mask & ~vmask), ObservationSet(obs.shape, vmask)


def estimator_from_config(cfg: RunConfig, graph: Graph | None = None) -> KReTTaHImputer:
    k = cfg.kernel
    return KReTTaHImputer(
        n_landmarks=cfg.Nl, mode=cfg.m, P=cfg.P, Q=cfg.Q, rank_u=cfg.r1, rank_v=cfg.r2, kernel=k.kind,
        sigma=k.sigma, degree=k.degree, offset=k.offset, nu=k.nu, lengthscale=k.lengthscale,
        lambda1=cfg.lambda1, lambda2=cfg.lambda2, lambda_l=cfg.lambda_l, lambda_u=cfg.lambda_u,
        alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma, eps=cfg.eps, max_iter=cfg.max_iters,
        max_backtracks=cfg.max_backtracks, graph=graph if (cfg.lambda_l > 0 or cfg.lambda_u > 0) else None,
        landmark_start=cfg.landmark_start, random_state=cfg.hyper().seed,
    )


def _rank_str(r) -> str:
    return "-".join(str(int(x)) for x in r) if isinstance(r, (list, tuple)) else str(int(r))


def _fmt(x: float) -> str:
    return repr(float(x))


def run_config(config_id: int, cfg: RunConfig, Y, train: ObservationSet, graph, truth=None,
               val: ObservationSet | None = None) -> dict:
    est = estimator_from_config(cfg, graph)
    t0 = time.perf_counter()
    est.fit(Y, mask=train)
    elapsed = time.perf_counter() - t0
    X = est.imputed_
    if truth is not None:
        err = nrmse(X, truth)
    else:
        err = nrmse(X[val.mask], np.asarray(Y)[val.mask])
    sU, sV = est.sparsity()
    row = {
        "config_id": config_id, "s": _fmt(cfg.s), "seed": cfg.seed, "lambda1": _fmt(cfg.lambda1),
        "lambda2": _fmt(cfg.lambda2), "lambda_l": _fmt(cfg.lambda_l), "lambda_u": _fmt(cfg.lambda_u),
        "Nl": cfg.Nl, "r1": _rank_str(cfg.r1), "r2": _rank_str(cfg.r2), "P": cfg.P, "Q": cfg.Q, "m": cfg.m,
        "kernel": cfg.kernel.kind, "nrmse": _fmt(err), "time_s": f"{elapsed:.3f}", "sparsity_U": _fmt(sU),
        "sparsity_V": _fmt(sV), "iters": est.n_iter_,
    }
    return {k: str(v) for k, v in row.items()}


def read_results(path) -> list[dict]:
    if not os.path.exists(path):
        return []
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def grid_search(Y, obs: ObservationSet, base: RunConfig, grid: dict, graph: Graph | None = None,
                truth=None, csv_path=None, n_jobs: int = 1):
    """Fit every configuration of ``grid`` (applied on top of ``base``).

    Without ``truth``, a ``base.holdout`` fraction of ``obs`` is held out and
    scored; with ``truth``, the fit uses all of ``obs`` and is scored against
    the full tensor. Rows already present in ``csv_path`` are reused, so an
    interrupted search resumes where it stopped. Returns ``(best_row,
    rows, best_config)``; ties go to the earliest configuration.
    """
    points = expand_grid(grid)
    if truth is None:
        train, val = holdout_split(obs, base.holdout, substream(base.seed, "holdout"))
    else:
        train, val = obs, None
    configs = []
    for i, p in enumerate(points):
        cfg = base.with_updates(**p, seed=substream(base.seed, f"config-{i}"))
        cfg.validate()
        configs.append(cfg)

    done = {}
    if csv_path is not None:
        for row in read_results(csv_path):
            done[int(row["config_id"])] = row
    todo = [i for i in range(len(configs)) if i not in done]
    results = Parallel(n_jobs=n_jobs, return_as="generator")(
        delayed(run_config)(i, configs[i], Y, train, graph, truth, val) for i in todo
    )
    if csv_path is None:
        for row in results:
            done[int(row["config_id"])] = row
    else:
        fresh = not os.path.exists(csv_path) or os.path.getsize(csv_path) == 0
        with open(csv_path, "a", newline="") as f:
            w = csv.DictWriter(f, fieldnames=RESULT_FIELDS, lineterminator="\n")
            if fresh:
                w.writeheader()
            for row in results:
                w.writerow(row)
                f.flush()
                done[int(row["config_id"])] = row
    rows = [done[i] for i in range(len(configs))]
    best = min(range(len(rows)), key=lambda i: (float(rows[i]["nrmse"]), i))
    return rows[best], rows, configs[best]
