"""Weighted norms, norm-induced metrics and Hausdorff distances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

KINDS = ("weighted-max", "weighted-p", "euclidean")


@dataclass(frozen=True)
class NormSpec:
    """A norm on R^d.

    ``weighted-max``: max_i |z_i| / weights_i
    ``weighted-p``:   (sum_i weights_i |z_i|^p)^(1/p)
    ``euclidean``:    sqrt(sum_i z_i^2); ``weights`` only fixes the dimension
    """

    kind: str
    weights: tuple[float, ...] | None = None
    p: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if not w:
                raise ValueError("weights must be nonempty")
            if any(not v > 0 for v in w):
                raise ValueError("all weights must be strictly positive")
            object.__setattr__(self, "weights", w)
        elif self.kind != "euclidean":
            raise ValueError(f"{self.kind} norm needs weights")
        if self.kind == "weighted-p":
            if self.p is None or not self.p >= 1:
                raise ValueError("weighted-p norm needs exponent p >= 1")
            object.__setattr__(self, "p", float(self.p))

    @classmethod
    def weighted_max(cls, weights: Sequence[float]) -> NormSpec:
        return cls("weighted-max", tuple(weights))

    @classmethod
    def weighted_p(cls, weights: Sequence[float], p: float) -> NormSpec:
        return cls("weighted-p", tuple(weights), p)

    @classmethod
    def euclidean(cls, dim: int | None = None) -> NormSpec:
        return cls("euclidean", None if dim is None else (1.0,) * dim)

    @classmethod
    def unit_max(cls, dim: int) -> NormSpec:
        return cls("weighted-max", (1.0,) * dim)

    @property
    def dim(self) -> int | None:
        return None if self.weights is None else len(self.weights)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def __call__(self, z) -> float:
        return norm_eval(self, z)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.weights is not None:
            out["weights"] = list(self.weights)
        if self.p is not None:
            out["p"] = self.p
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> NormSpec:
        weights = data.get("weights")
        return cls(data["kind"], None if weights is None else tuple(weights), data.get("p"))


def _check_dim(spec: NormSpec, d: int) -> None:
    if spec.weights is not None and len(spec.weights) != d:
        raise ValueError(f"dimension mismatch: vector has {d} entries, norm has {len(spec.weights)}")


def norm_rows(spec: NormSpec, z: np.ndarray) -> np.ndarray:
    """Norm of every vector along the last axis of ``z``."""
    z = np.asarray(z, dtype=float)
    _check_dim(spec, z.shape[-1])
    if spec.kind == "weighted-max":
        return np.max(np.abs(z) / spec.w, axis=-1)
    # rescale by the largest entry so tiny vectors do not underflow to norm 0
    scale = np.max(np.abs(z), axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    y = z / safe
    if spec.kind == "weighted-p":
        p = spec.p
        if p == 2.0:
            inner = np.sqrt(np.sum(spec.w * y * y, axis=-1))
        else:
            inner = np.sum(spec.w * np.abs(y) ** p, axis=-1) ** (1.0 / p)
    else:
        inner = np.sqrt(np.sum(y * y, axis=-1))
    return inner * safe[..., 0]


def norm_eval(spec: NormSpec, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("norm_eval expects a single vector")
    return float(norm_rows(spec, z))


def sandwich_constants(
    spec: NormSpec, d: int, reference: NormSpec | None = None
) -> tuple[float, float]:
    """Constants (lower, upper) with lower*||z||_nu <= ||z||_target <= upper*||z||_nu.

    For a weighted-max ``spec`` the target is the Euclidean norm and nu is ``spec``
    itself: (nu_min, d*nu_max). For a weighted-p ``spec`` the target is ``spec`` and
    nu is the weighted-max ``reference`` (unit weights when omitted):
    (nu_min, d*omega_max*nu_max) whenever every omega_i >= 1. Smaller omega breaks
    those constants, so they are widened to min(1, omega_min^(1/p))*nu_min and
    max(d*omega_max, (d*omega_max)^(1/p))*nu_max, which always hold.
    """
    if spec.kind == "euclidean":
        raise ValueError("the Euclidean norm has no sandwich with respect to itself")
    _check_dim(spec, d)
    if spec.kind == "weighted-max":
        nu = spec.w
        return float(nu.min()), float(d * nu.max())
    if reference is None:
        reference = NormSpec.unit_max(d)
    if reference.kind != "weighted-max":
        raise ValueError("reference norm must be weighted-max")
    _check_dim(reference, d)
    nu, omega, p = reference.w, spec.w, spec.p
    lower = min(1.0, omega.min() ** (1.0 / p)) * nu.min()
    dw = d * omega.max()
    upper = max(dw, dw ** (1.0 / p)) * nu.max()
    return float(lower), float(upper)


def dominance_constant(spec: NormSpec, d: int) -> float:
    """C with ||z||_2 <= C * ||z||_spec on R^d (tight unless weighted-p weights differ)."""
    _check_dim(spec, d)
    if spec.kind == "euclidean":
        return 1.0
    if spec.kind == "weighted-max":
        return float(math.sqrt(np.sum(spec.w**2)))
    p = spec.p
    # ||z||_2 <= d^{max(0,1/2-1/p)} ||z||_p and ||z||_p <= omega_min^{-1/p} ||z||_{omega,p}
    return float(d ** max(0.0, 0.5 - 1.0 / p) * spec.w.min() ** (-1.0 / p))


@dataclass(frozen=True)
class MetricSpec:
    """rho(x, y) = ||x - y||_norm together with C such that ||x - y|| <= C rho(x, y)."""

    norm: NormSpec
    dominance_constant: float

    def __post_init__(self) -> None:
        if not self.dominance_constant > 0:
            raise ValueError("dominance constant must be positive")

    @classmethod
    def from_norm(cls, norm: NormSpec, d: int | None = None) -> MetricSpec:
        d = norm.dim if d is None else d
        if d is None:
            raise ValueError("dimension needed for a Euclidean metric without weights")
        return cls(norm, dominance_constant(norm, d))

    def __call__(self, x, y) -> float:
        return norm_eval(self.norm, np.asarray(x, float) - np.asarray(y, float))

    def to_dict(self) -> dict[str, Any]:
        return {"norm": self.norm.to_dict(), "dominance_constant": self.dominance_constant}


def as_finite_set(points) -> np.ndarray:
    """Validate a finite point set and return it as an (n, d) array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("a finite set is a list of equal-length vectors")
    if arr.shape[0] == 0:
        raise ValueError("finite set must be nonempty")
    return arr


def _as_norm(metric: MetricSpec | NormSpec) -> NormSpec:
    return metric.norm if isinstance(metric, MetricSpec) else metric


def distances(A, B, metric: MetricSpec | NormSpec) -> np.ndarray:
    """Pairwise metric distances, shape (len(A), len(B))."""
    A, B = as_finite_set(A), as_finite_set(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError("point sets have different dimensions")
    return norm_rows(_as_norm(metric), A[:, None, :] - B[None, :, :])


def point_set_distance(x, A, metric: MetricSpec | NormSpec) -> float:
    """d(x, A) = min over a in A of rho(x, a)."""
    return float(distances(np.atleast_2d(np.asarray(x, float)), A, metric).min())


def hausdorff(A, B, metric: MetricSpec | NormSpec) -> float:
    A, B = as_finite_set(A), as_finite_set(B)
    norm = _as_norm(metric)
    # chunk to keep the (n, m, d) difference tensor bounded
    chunk = max(1, 2_000_000 // max(1, B.shape[0] * B.shape[1]))
    a_to_b = 0.0
    b_to_a = np.full(B.shape[0], np.inf)
    for start in range(0, A.shape[0], chunk):
        block = distances(A[start : start + chunk], B, norm)
        a_to_b = max(a_to_b, float(block.min(axis=1).max()))
        b_to_a = np.minimum(b_to_a, block.min(axis=0))
    return max(a_to_b, float(b_to_a.max()))


def ball_translate_hausdorff(c1, c2, radius: float, norm: NormSpec) -> float:
    """Hausdorff distance between two radius-r balls of ``norm`` centred at c1 and c2."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return norm_eval(norm, np.asarray(c1, float) - np.asarray(c2, float))


def sample_ball(center, radius: float, norm: NormSpec, n_per_axis: int) -> tuple[np.ndarray, float]:
    """Grid samples of a closed norm ball and the grid's cell diagonal measured in ``norm``.

    The grid spans the ball's bounding box, so for weighted-max balls the box corners
    are sampled exactly. Every ball point lies within one cell diagonal of a sample
    once the grid is fine relative to the radius.
    """
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    _check_dim(norm, d)
    if norm.kind == "weighted-max":
        half = radius * norm.w
    elif norm.kind == "weighted-p":
        half = radius * norm.w ** (-1.0 / norm.p)
    else:
        half = np.full(d, radius)
    axes = [np.linspace(-h, h, n_per_axis) for h in half]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    inside = grid[norm_rows(norm, grid) <= radius * (1 + 1e-12)]
    if norm.kind != "weighted-max":
        # radial boundary samples keep the curved part of the sphere covered
        n_dir = n_per_axis * 4
        if d == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif d == 2:
            ang = np.linspace(0.0, 2 * np.pi, n_dir, endpoint=False)
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            dirs = np.random.default_rng(0).normal(size=(n_dir * d, d))
        boundary = radius * dirs / norm_rows(norm, dirs)[:, None]
        inside = np.vstack([inside, boundary])
    spacing = 2 * half / max(1, n_per_axis - 1)
    mesh = norm_eval(norm, spacing)
    return center + inside, mesh
