"""Run configuration: JSON round-trip, validation, named seed sub-streams."""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .kernel import KernelSpec
from .model import Hyperparams


class ConfigError(ValueError):
    """Invalid configuration value; the message names the field."""


def substream(seed: int, name: str) -> int:
    """Deterministic 32-bit seed for the named sub-stream of ``seed``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


HYPER_FIELDS = ("lambda1", "lambda2", "lambda_l", "lambda_u", "alpha", "beta", "gamma", "eps",
                "max_iters", "max_backtracks")


@dataclass
class RunConfig:
    # inputs / outputs
    tensor: str | None = None
    mask: str | None = None
    graph: str | None = None
    truth: str | None = None
    output: str = "out"
    resume: str | None = None
    # model structure
    P: int = 1
    Q: int = 1
    m: int = 1
    r1: int | list = 8
    r2: int | list = 8
    Nl: int = 50
    landmark_start: int | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    # optimization
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
    # synthetic generator
    I2: int = 20
    I3: int = 5
    s: float = 0.5
    gen_rank: int = 2
    noise: float = 0.0
    div_weight: float = 0.0
    graph_nodes: int | None = None
    graph_edges: int | None = None
    # grid search
    grid: dict | None = None
    holdout: float = 0.1

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec.from_dict(self.kernel)

    def validate(self) -> "RunConfig":
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"{name}: {msg}")

        need(int(self.P) == self.P and self.P >= 1, "P", "must be an integer >= 1")
        need(int(self.Q) == self.Q and self.Q >= 1, "Q", "must be an integer >= 1")
        need(int(self.m) == self.m and self.m >= 1, "m", "must be an integer >= 1")
        need(int(self.Nl) == self.Nl and self.Nl >= 1, "Nl", "must be an integer >= 1")
        for name in ("r1", "r2"):
            r = getattr(self, name)
            if isinstance(r, (list, tuple)):
                need(all(int(x) == x and x >= 1 for x in r), name, "rank entries must be positive integers")
            else:
                need(int(r) == r and r >= 1, name, "must be a positive integer or a rank vector")
        try:
            self.hyper()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        try:
            self.kernel.validate()
        except ValueError as exc:
            raise ConfigError(f"kernel: {exc}") from None
        need(0 < self.s <= 1, "s", "must lie in (0, 1]")
        need(0 <= self.div_weight <= 1, "div_weight", "must lie in [0, 1]")
        need(self.noise >= 0, "noise", "must be nonnegative")
        need(0 < self.holdout < 1, "holdout", "must lie in (0, 1)")
        need(self.I2 >= 1, "I2", "must be positive")
        need(self.I3 >= 1, "I3", "must be positive")
        need(int(self.gen_rank) == self.gen_rank and self.gen_rank >= 1, "gen_rank", "must be an integer >= 1")
        need(int(self.max_iters) == self.max_iters, "max_iters", "must be an integer")
        need((self.graph_nodes is None) == (self.graph_edges is None), "graph_nodes",
             "graph_nodes and graph_edges must be given together")
        if self.grid is not None:
            need(isinstance(self.grid, dict) and len(self.grid) > 0, "grid", "must be a nonempty mapping")
            known = {f.name for f in fields(self)} | {"kernel_kind"}
            for k, v in self.grid.items():
                need(k in known, "grid", f"unknown parameter {k!r}")
                need(isinstance(v, list) and len(v) > 0, "grid", f"values for {k!r} must be a nonempty list")
        return self

    def check_mode(self, ndim: int) -> None:
        if not 1 <= self.m <= ndim - 1:
            raise ConfigError(f"m: mode {self.m} out of range [1, {ndim - 1}] for an order-{ndim} tensor")

    def hyper(self) -> Hyperparams:
        return Hyperparams(**{k: getattr(self, k) for k in HYPER_FIELDS}, seed=substream(self.seed, "init"))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
        d = dict(d)
        if "kernel" in d and isinstance(d["kernel"], dict):
            try:
                d["kernel"] = KernelSpec.from_dict(d["kernel"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"kernel: {exc}") from None
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def with_updates(self, **kw) -> "RunConfig":
        d = self.to_dict()
        for k, v in kw.items():
            if k == "kernel_kind":
                d["kernel"] = {**d["kernel"], "kind": v}
            else:
                d[k] = v
        return RunConfig.from_dict(d)
