"""Navigator extraction, greedy landmark selection and kernel matrices."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .tensor import unfold

KINDS = ("gaussian", "polynomial", "matern")


@dataclass
class KernelSpec:
    """Kernel family and parameters.

    ``sigma`` (gaussian) and ``lengthscale`` (matern) default to the median
    pairwise distance between landmarks when left as ``None``.
    """

    kind: str = "gaussian"
    sigma: float | None = None
    degree: int = 2
    offset: float = 1.0
    nu: float = 1.5
    lengthscale: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"kernel kind must be one of {KINDS}, got {self.kind!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("kernel sigma must be positive")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial degree must be an integer >= 1")
            if self.offset < 0:
                raise ValueError("polynomial offset must be nonnegative")
        if self.nu not in (1.5, 2.5):
            raise ValueError("matern nu must be 1.5 or 2.5")
        if self.lengthscale is not None and not self.lengthscale > 0:
            raise ValueError("matern lengthscale must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)

    def resolved(self, points: np.ndarray) -> "KernelSpec":
        """Copy with data-dependent width parameters filled in."""
        spec = KernelSpec(**asdict(self))
        if (spec.kind == "gaussian" and spec.sigma is None) or (spec.kind == "matern" and spec.lengthscale is None):
            width = median_distance(points)
            if spec.kind == "gaussian":
                spec.sigma = width
            else:
                spec.lengthscale = width
        return spec


class NavigatorSet(NamedTuple):
    vectors: np.ndarray  # (N_nav, nu)
    mode: int


class LandmarkSet(NamedTuple):
    points: np.ndarray  # (N_l, nu)
    indices: np.ndarray


def median_distance(points: np.ndarray) -> float:
    """Median pairwise Euclidean distance, 1.0 if all points coincide."""
    if len(points) < 2:
        return 1.0
    d = pdist(points)
    med = float(np.median(d))
    if med > 0:
        return med
    pos = d[d > 0]
    return float(np.median(pos)) if pos.size else 1.0


def build_navigators(Y_obs: np.ndarray, m: int) -> NavigatorSet:
    """Columns of the m-th unfolding of the zero-filled observed tensor."""
    return NavigatorSet(np.ascontiguousarray(unfold(Y_obs, m).T), int(m))


def select_landmarks(navs: NavigatorSet, n_landmarks: int, start: int | None = None) -> LandmarkSet:
    """Greedy max-min Euclidean selection.

    The first landmark is the navigator farthest from the centroid unless
    ``start`` is given; ties go to the lowest index.
    """
    Yn = navs.vectors
    n = len(Yn)
    if not 1 <= n_landmarks <= n:
        raise ValueError(f"number of landmarks {n_landmarks} must be in [1, {n}]")
    if start is None:
        first = int(np.argmax(np.linalg.norm(Yn - Yn.mean(axis=0), axis=1)))
    else:
        if not 0 <= start < n:
            raise ValueError(f"landmark start index {start} out of range")
        first = int(start)
    chosen = [first]
    mind = np.linalg.norm(Yn - Yn[first], axis=1)
    mind[first] = -np.inf
    for _ in range(n_landmarks - 1):
        j = int(np.argmax(mind))
        chosen.append(j)
        mind = np.minimum(mind, np.linalg.norm(Yn - Yn[j], axis=1))
        mind[chosen] = -np.inf
    idx = np.array(chosen, dtype=np.int64)
    return LandmarkSet(Yn[idx], idx)


def _from_distance(spec: KernelSpec, d: np.ndarray) -> np.ndarray:
    if spec.kind == "gaussian":
        return np.exp(-(d**2) / (2.0 * spec.sigma**2))
    r = d / spec.lengthscale
    if spec.nu == 1.5:
        a = np.sqrt(3.0) * r
        return (1.0 + a) * np.exp(-a)
    a = np.sqrt(5.0) * r
    return (1.0 + a + a**2 / 3.0) * np.exp(-a)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"vector lengths differ: {x.size} != {y.size}")
    if spec.kind == "polynomial":
        return float((x @ y + spec.offset) ** int(spec.degree))
    if (spec.kind == "gaussian" and spec.sigma is None) or (spec.kind == "matern" and spec.lengthscale is None):
        raise ValueError("kernel width is unresolved; call KernelSpec.resolved first")
    return float(_from_distance(spec, np.linalg.norm(x - y)))


def build_kernel_matrix(landmarks: LandmarkSet, spec: KernelSpec) -> np.ndarray:
    pts = np.asarray(landmarks.points, dtype=np.float64)
    if len(pts) == 0:
        raise ValueError("empty landmark set")
    spec.validate()
    spec = spec.resolved(pts)
    if spec.kind == "polynomial":
        K = (pts @ pts.T + spec.offset) ** int(spec.degree)
    else:
        K = _from_distance(spec, cdist(pts, pts))
    return 0.5 * (K + K.T)
