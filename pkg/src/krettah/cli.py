"""Command-line interface: ``krettah {gen,impute,grid,eval,info}``.

Settings come from an optional JSON ``--config`` file; flags override file
values, which override built-in defaults. Exit codes: 0 success, 2 invalid
configuration, 3 I/O error, 4 line search failed on the first iteration.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import fields

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, substream
from .datagen import gen_flow_tensor, make_sampling_plan, random_graph
from .estimator import resolve_ranks
from .grid import RESULT_FIELDS, estimator_from_config, grid_search
from .io import read_graph, read_mask, read_tensor, read_tt, write_graph, write_mask, write_tensor, write_tt
from .metrics import nrmse, nrmse_missing, sparsity_pct
from .optimizer import LINE_SEARCH_FAILED
from .tensor import ObservationSet
from .tt import manifold_dim

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

_PATHS = ("tensor", "mask", "graph", "truth", "output", "resume")
_INTS = ("P", "Q", "m", "Nl", "landmark_start", "max_iters", "max_backtracks", "seed", "I2", "I3", "gen_rank",
         "graph_nodes", "graph_edges")
_KERNEL = {"sigma": float, "degree": int, "offset": float, "nu": float, "lengthscale": float}


class InputError(Exception):
    """Unreadable or malformed input file."""


class NumericalFailure(Exception):
    pass


def _rank(text: str):
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid rank {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty rank")
    return vals[0] if len(vals) == 1 else vals


def _add_overrides(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON configuration file")
    for f in fields(RunConfig):
        name = f.name
        if name in ("kernel", "grid"):
            continue
        if name in _PATHS:
            kind = str
        elif name in _INTS:
            kind = int
        elif name in ("r1", "r2"):
            kind = _rank
        else:
            kind = float
        p.add_argument(f"--{name}", type=kind, default=S, help=f"override '{name}'")
    p.add_argument("--kernel", dest="kernel_kind", default=S, help="gaussian, polynomial or matern")
    for name, kind in _KERNEL.items():
        p.add_argument(f"--{name}", type=kind, default=S, dest=f"kernel_{name}")
    p.add_argument("--grid", default=S, help="grid as a JSON object of lists")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="krettah", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, hlp in (("gen", "generate a synthetic flow tensor and sampling mask"),
                      ("impute", "complete a partially observed tensor"),
                      ("grid", "grid search over hyperparameters"),
                      ("info", "describe a configuration and its inputs")):
        _add_overrides(sub.add_parser(name, help=hlp))
    ev = sub.add_parser("eval", help="score an imputed tensor against ground truth")
    ev.add_argument("--imputed", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--mask", help="observation mask; adds missing-only NRMSE")
    ev.add_argument("--threshold", type=float, default=1e-3, help="sparsity threshold")
    ev.add_argument("--output", help="metrics JSON path (stdout if omitted)")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                text = f.read()
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
    try:
        cfg = RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from None
    kw = {}
    kernel = dict(cfg.kernel.to_dict())
    for key, val in vars(args).items():
        if key in ("command", "config"):
            continue
        if key == "kernel_kind":
            kernel["kind"] = val
        elif key.startswith("kernel_"):
            kernel[key[len("kernel_"):]] = val
        elif key == "grid":
            try:
                kw["grid"] = json.loads(val)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"grid: invalid JSON ({exc})") from None
        else:
            kw[key] = val
    kw["kernel"] = kernel
    return cfg.with_updates(**kw).validate()


def _threads() -> int | None:
    raw = os.environ.get("KRETTAH_THREADS")
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"KRETTAH_THREADS: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"KRETTAH_THREADS: expected a positive integer, got {raw!r}")
    return n


def _read(reader, path, *args):
    try:
        return reader(path, *args)
    except (OSError, ValueError, IndexError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_inputs(cfg: RunConfig):
    if cfg.tensor is None:
        raise ConfigError("tensor: an input tensor path is required")
    Y = _read(read_tensor, cfg.tensor)
    cfg.check_mode(Y.ndim)
    obs = _read(read_mask, cfg.mask, Y.shape) if cfg.mask else ObservationSet.full(Y.shape)
    truth = _read(read_tensor, cfg.truth) if cfg.truth else None
    if truth is not None and truth.shape != Y.shape:
        raise ConfigError(f"truth: shape {truth.shape} does not match tensor shape {Y.shape}")
    graph = None
    if cfg.graph:
        graph = _read(read_graph, cfg.graph)
    elif cfg.lambda_l > 0 or cfg.lambda_u > 0:
        raise ConfigError("graph: a graph file is required when lambda_l or lambda_u is positive")
    if graph is not None and graph.n_edges != Y.shape[0]:
        raise ConfigError(f"graph: {graph.n_edges} edges but tensor mode 1 has {Y.shape[0]} entries")
    return Y, obs, truth, graph


def cmd_gen(cfg: RunConfig) -> int:
    if cfg.graph:
        g = _read(read_graph, cfg.graph)
        graph_seed = None
    elif cfg.graph_nodes is not None:
        graph_seed = substream(cfg.seed, "graph")
        try:
            g = random_graph(cfg.graph_nodes, cfg.graph_edges, seed=graph_seed)
        except ValueError as exc:
            raise ConfigError(f"graph_edges: {exc}") from None
    else:
        raise ConfigError("graph: give a graph file or graph_nodes/graph_edges")
    gen_seed, samp_seed = substream(cfg.seed, "generator"), substream(cfg.seed, "sampling")
    try:
        Y = gen_flow_tensor(g, cfg.I2, cfg.I3, rank=cfg.gen_rank, noise_level=cfg.noise,
                            div_weight=cfg.div_weight, seed=gen_seed)
    except ValueError as exc:
        raise ConfigError(f"gen_rank: {exc}") from None
    plan, obs = make_sampling_plan(g.n_edges, cfg.I2, cfg.I3, cfg.s, seed=samp_seed)
    os.makedirs(cfg.output, exist_ok=True)
    write_tensor(os.path.join(cfg.output, "tensor.txt"), Y)
    write_mask(os.path.join(cfg.output, "mask.txt"), obs)
    if graph_seed is not None:
        write_graph(os.path.join(cfg.output, "graph.txt"), g)
    manifest = {
        "shape": list(Y.shape), "nodes": g.num_nodes, "edges": g.n_edges, "triangles": g.n_triangles,
        "I2": cfg.I2, "I3": cfg.I3, "s": cfg.s, "edges_per_instant": plan.per_instant,
        "observed": len(obs), "gen_rank": cfg.gen_rank, "noise": cfg.noise, "div_weight": cfg.div_weight,
        "seed": cfg.seed, "seeds": {"generator": gen_seed, "sampling": samp_seed, "graph": graph_seed},
        "files": {"tensor": "tensor.txt", "mask": "mask.txt",
                  "graph": "graph.txt" if graph_seed is not None else cfg.graph},
    }
    _write_json(os.path.join(cfg.output, "manifest.json"), manifest)
    return EXIT_OK


def _resume_factors(cfg: RunConfig):
    paths = [os.path.join(cfg.resume, f"U_{p}.tt") for p in range(1, cfg.P + 1)]
    paths += [os.path.join(cfg.resume, f"V_{q}.tt") for q in range(1, cfg.Q + 1)]
    return [_read(read_tt, p) for p in paths]


def cmd_impute(cfg: RunConfig) -> int:
    Y, obs, truth, graph = _load_inputs(cfg)
    init = _resume_factors(cfg) if cfg.resume else None
    est = estimator_from_config(cfg, graph)
    t0 = time.perf_counter()
    try:
        est.fit(Y, mask=obs, init_factors=init)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None
    wall = time.perf_counter() - t0
    out = cfg.output
    os.makedirs(out, exist_ok=True)
    write_tensor(os.path.join(out, "imputed.txt"), est.imputed_)
    for p, f in enumerate(est.state_.U, 1):
        write_tt(os.path.join(out, f"U_{p}.tt"), f)
    for q, f in enumerate(est.state_.V, 1):
        write_tt(os.path.join(out, f"V_{q}.tt"), f)
    with open(os.path.join(out, "iterations.csv"), "w") as fh:
        fh.write(est.report_.to_csv())
    sU, sV = est.sparsity()
    rep = est.report_
    metrics = {"iterations": rep.iterations, "reason": rep.reason, "initial_loss": rep.initial_loss,
               "final_loss": rep.losses[-1], "sparsity_U": sU, "sparsity_V": sV, "repairs": rep.repairs,
               "observed": len(obs), "wall_time_s": round(wall, 6)}
    if truth is not None:
        metrics["nrmse"] = nrmse(est.imputed_, truth)
        if len(obs) < obs.mask.size:
            metrics["nrmse_missing"] = nrmse_missing(est.imputed_, truth, obs)
    _write_json(os.path.join(out, "metrics.json"), metrics)
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(cfg.to_json() + "\n")
    if rep.reason == LINE_SEARCH_FAILED and rep.iterations == 0:
        raise NumericalFailure("line search failed at iteration 1")
    return EXIT_OK


def cmd_grid(cfg: RunConfig, n_jobs: int) -> int:
    if not cfg.grid:
        raise ConfigError("grid: a nonempty grid is required")
    Y, obs, truth, graph = _load_inputs(cfg)
    if graph is None and any(k in cfg.grid for k in ("lambda_l", "lambda_u")):
        raise ConfigError("graph: a graph file is required to search over lambda_l or lambda_u")
    os.makedirs(cfg.output, exist_ok=True)
    csv_path = os.path.join(cfg.output, "results.csv")
    try:
        best_row, rows, best_cfg = grid_search(Y, obs, cfg, cfg.grid, graph=graph, truth=truth,
                                               csv_path=csv_path, n_jobs=n_jobs)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    best = {"best_config_id": int(best_row["config_id"]), "nrmse": float(best_row["nrmse"]),
            "n_configs": len(rows), "config": best_cfg.to_dict()}
    _write_json(os.path.join(cfg.output, "best_config.json"), best)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    X = _read(read_tensor, args.imputed)
    Y = _read(read_tensor, args.truth)
    if X.shape != Y.shape:
        raise ConfigError(f"imputed: shape {X.shape} does not match truth shape {Y.shape}")
    try:
        out = {"nrmse": nrmse(X, Y)}
        if args.mask:
            obs = _read(read_mask, args.mask, Y.shape)
            if len(obs) < obs.mask.size:
                out["nrmse_missing"] = nrmse_missing(X, Y, obs)
        if np.any(X):
            out["sparsity"] = sparsity_pct(X, args.threshold)
    except ValueError as exc:
        raise ConfigError(f"truth: {exc}") from None
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_info(cfg: RunConfig) -> int:
    info = {"version": __version__, "threads": _threads(), "config": cfg.to_dict()}
    if cfg.tensor:
        Y = _read(read_tensor, cfg.tensor)
        cfg.check_mode(Y.ndim)
        info["tensor"] = {"shape": list(Y.shape), "norm": float(np.linalg.norm(Y))}
        if cfg.mask:
            obs = _read(read_mask, cfg.mask, Y.shape)
            info["tensor"]["observed"] = len(obs)
        m = cfg.m
        u_shape = Y.shape[:m] + (cfg.Nl,)
        v_shape = (cfg.Nl,) + Y.shape[m:]
        try:
            ru, rv = resolve_ranks(cfg.r1, u_shape), resolve_ranks(cfg.r2, v_shape)
        except ValueError as exc:
            raise ConfigError(f"r1: {exc}") from None
        info["model"] = {"U_shape": list(u_shape), "V_shape": list(v_shape), "rank_u": list(ru),
                         "rank_v": list(rv), "dim_U": manifold_dim(ru, u_shape),
                         "dim_V": manifold_dim(rv, v_shape),
                         "parameters": cfg.P * manifold_dim(ru, u_shape) + cfg.Q * manifold_dim(rv, v_shape)}
    if cfg.graph:
        g = _read(read_graph, cfg.graph)
        info["graph"] = {"nodes": g.num_nodes, "edges": g.n_edges, "triangles": g.n_triangles}
    sys.stdout.write(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            return cmd_eval(args)
        n = _threads()
        cfg = load_config(args)
        try:
            from threadpoolctl import threadpool_limits
            limit = threadpool_limits(n) if n else nullcontext()
        except ImportError:  # pragma: no cover
            limit = nullcontext()
        with limit:
            if args.command == "gen":
                return cmd_gen(cfg)
            if args.command == "impute":
                return cmd_impute(cfg)
            if args.command == "grid":
                return cmd_grid(cfg, n or 1)
            return cmd_info(cfg)
    except ConfigError as exc:
        print(f"krettah: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"krettah: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"krettah: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as exc:
        print(f"krettah: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> None:
    sys.exit(run(argv))


__all__ = ["build_parser", "load_config", "run", "main", "RESULT_FIELDS"]
