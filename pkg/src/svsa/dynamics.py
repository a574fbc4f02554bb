"""Set-valued maps, selections, Euler solutions of x' in H(x), Lyapunov sublevel sets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.optimize import nnls

from .norms import NormSpec, as_finite_set, distances, dominance_constant, norm_eval, norm_rows

DIVERGENCE_THRESHOLD = 1e12


class MembershipError(ValueError):
    """A selection strategy produced a point outside H(x)."""


class DivergedError(RuntimeError):
    def __init__(self, message: str, last_state: np.ndarray, step: int):
        super().__init__(message)
        self.last_state = last_state
        self.step = step


class HorizonTooShortError(RuntimeError):
    pass


# --------------------------------------------------------------------------- perturbations


@dataclass(frozen=True)
class Ball:
    """Closed ball {u : ||u||_norm <= radius}; ``radius`` may depend on the base point x."""

    radius: Union[float, Callable[[np.ndarray], float]]
    norm: NormSpec

    def radius_at(self, x) -> float:
        r = self.radius(np.asarray(x, float)) if callable(self.radius) else self.radius
        if r < 0:
            raise ValueError("ball radius must be nonnegative")
        return float(r)

    @property
    def state_dependent(self) -> bool:
        return callable(self.radius)


@dataclass(frozen=True)
class Offsets:
    """Convex hull of a finite list of offset vectors."""

    points: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", as_finite_set(self.points))


Perturbation = Union[Ball, Offsets, None]


def unit_ball_sample(norm: NormSpec, d: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform draws from the unit ball of ``norm``."""
    if norm.kind == "weighted-max":
        w = norm.w if norm.weights is not None else np.ones(d)
        return rng.uniform(-1.0, 1.0, size=(size, d)) * w
    if norm.kind == "euclidean":
        g = rng.normal(size=(size, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * rng.uniform(size=(size, 1)) ** (1.0 / d)
    half = norm.w ** (-1.0 / norm.p)
    out = np.empty((size, d))
    filled = 0
    while filled < size:
        cand = rng.uniform(-1.0, 1.0, size=(2 * (size - filled) + 16, d)) * half
        keep = cand[norm_rows(norm, cand) <= 1.0]
        take = min(len(keep), size - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def unit_axis_offsets(norm: NormSpec, d: int) -> np.ndarray:
    """The 2d vectors +-e_i rescaled to unit ``norm``."""
    eye = np.eye(d)
    axes = eye / norm_rows(norm, eye)[:, None]
    return np.vstack([axes, -axes])


# --------------------------------------------------------------------------- set-valued map


@dataclass(frozen=True)
class SetValuedMap:
    """H(x) = {F(x) + u : u in perturbation}, convex and compact by construction.

    ``vectorized`` declares that ``base`` maps an (n, d) array row-wise in one call.
    """

    base: Callable[[np.ndarray], np.ndarray]
    dim: int
    perturbation: Perturbation = None
    vectorized: bool = False

    def F(self, x) -> np.ndarray:
        return np.asarray(self.base(np.asarray(x, float)), dtype=float)

    def F_batch(self, X: np.ndarray) -> np.ndarray:
        if self.vectorized:
            return np.asarray(self.base(X), dtype=float)
        return np.array([self.base(row) for row in X], dtype=float).reshape(X.shape)

    def radius_at(self, x) -> float:
        return self.perturbation.radius_at(x) if isinstance(self.perturbation, Ball) else 0.0

    def minus_identity(self) -> SetValuedMap:
        """The mean field x -> H(x) - x."""
        base = self.base
        return SetValuedMap(lambda x: base(x) - x, self.dim, self.perturbation, self.vectorized)

    def membership_distance(self, x, y) -> float:
        """Distance from y to H(x): ball norm for balls, Euclidean for offset hulls."""
        u = np.asarray(y, float) - self.F(x)
        pert = self.perturbation
        if pert is None:
            return float(np.linalg.norm(u))
        if isinstance(pert, Ball):
            return max(0.0, norm_eval(pert.norm, u) - pert.radius_at(x))
        return _hull_distance(pert.points, u)

    def contains(self, x, y, tol: float = 1e-12) -> bool:
        return self.membership_distance(x, y) <= tol

    def sup_norm(self, x) -> float:
        """sup of the Euclidean norm over H(x); an upper bound for weighted-p balls."""
        fx = self.F(x)
        pert = self.perturbation
        if pert is None:
            return float(np.linalg.norm(fx))
        if isinstance(pert, Offsets):
            return float(np.linalg.norm(fx + pert.points, axis=1).max())
        r = pert.radius_at(x)
        if pert.norm.kind == "weighted-max":
            return float(np.sqrt(np.sum((np.abs(fx) + r * pert.norm.w) ** 2)))
        if pert.norm.kind == "euclidean":
            return float(np.linalg.norm(fx) + r)
        return float(np.linalg.norm(fx) + r * dominance_constant(pert.norm, self.dim))

    def diameter(self, x, norm: NormSpec) -> float:
        """diam H(x) in ``norm``."""
        pert = self.perturbation
        if pert is None:
            return 0.0
        if isinstance(pert, Offsets):
            return float(distances(pert.points, pert.points, norm).max())
        r = pert.radius_at(x)
        if pert.norm == norm:
            return 2.0 * r
        if pert.norm.kind == "weighted-max":
            # box vertices realise the diameter of a box in any norm
            signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * self.dim)).reshape(self.dim, -1).T
            extremes = signs * (r * pert.norm.w)
        else:
            extremes = r * unit_axis_offsets(pert.norm, self.dim)
        return float(distances(extremes, extremes, norm).max())

    def extreme_offsets(self) -> np.ndarray:
        """Centre plus extreme offsets, standing in for the max over all solutions.

        For a state-dependent ball these are unit directions, rescaled per state.
        """
        pert = self.perturbation
        zero = np.zeros((1, self.dim))
        if pert is None:
            return zero
        if isinstance(pert, Offsets):
            return np.vstack([pert.points.mean(axis=0, keepdims=True), pert.points])
        r = 1.0 if pert.state_dependent else pert.radius
        return np.vstack([zero, r * unit_axis_offsets(pert.norm, self.dim)])


def _hull_distance(points: np.ndarray, u: np.ndarray) -> float:
    diffs = np.linalg.norm(points - u, axis=1)
    if diffs.min() <= 1e-15 * (1 + np.abs(u).max()):
        return 0.0
    if np.linalg.norm(points.mean(axis=0) - u) <= 1e-15 * (1 + np.abs(u).max()):
        return 0.0
    # simplex-constrained least squares via a heavily weighted sum-to-one row
    weight = 1e6 * (1.0 + np.abs(points).max())
    A = np.vstack([points.T, weight * np.ones(len(points))])
    b = np.concatenate([u, [weight]])
    lam, _ = nnls(A, b)
    lam = lam / lam.sum()
    dist = float(np.linalg.norm(points.T @ lam - u))
    return 0.0 if dist < 1e-9 else dist


def affine_map(A, b, perturbation: Perturbation = None) -> SetValuedMap:
    """H(x) = A x + b + perturbation, vectorized over rows."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape != (b.size, b.size):
        raise ValueError("affine map needs square A matching b")
    At = A.T.copy()

    def base(x):
        return x @ At + b

    return SetValuedMap(base, b.size, perturbation, vectorized=True)


# --------------------------------------------------------------------------- selections

STRATEGY_KINDS = ("center", "uniform", "fixed-bias", "callback")


@dataclass(frozen=True)
class SelectionStrategy:
    """How y in H(x) is chosen at each step.

    ``callback(x, fx, rng)`` must return a point of H(x); it is checked.
    """

    kind: str = "center"
    bias: tuple[float, ...] | None = None
    callback: Callable | None = None
    tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if self.kind == "fixed-bias" and self.bias is None:
            raise ValueError("fixed-bias selection needs a bias vector")
        if self.kind == "callback" and self.callback is None:
            raise ValueError("callback selection needs a callback")

    @classmethod
    def fixed(cls, bias: Sequence[float]) -> SelectionStrategy:
        return cls("fixed-bias", tuple(float(v) for v in bias))

    def prepare(self, hmap: SetValuedMap, n: int, rng: np.random.Generator | None):
        """Return offset(k, x, fx) -> u with fx + u in H(x), for steps k < n.

        Random draws for the ``uniform`` kind are made up front so that the k-th
        draw depends only on the generator state, never on the visited states.
        """
        pert = hmap.perturbation
        d = hmap.dim
        if self.kind == "callback":
            cb = self.callback

            def offset(k, x, fx):
                y = np.asarray(cb(x, fx, rng), dtype=float)
                u = y - fx
                dist = _offset_distance(hmap, x, u)
                if dist > self.tol:
                    raise MembershipError(f"callback selection is {dist:.3g} outside H(x) at step {k}")
                return u

            return offset
        if pert is None:
            zero = np.zeros(d)
            return lambda k, x, fx: zero
        if self.kind == "center":
            u0 = pert.points.mean(axis=0) if isinstance(pert, Offsets) else np.zeros(d)
            return lambda k, x, fx: u0
        if self.kind == "fixed-bias":
            u0 = np.asarray(self.bias, dtype=float)
            if u0.shape != (d,):
                raise ValueError("bias has the wrong dimension")
            if isinstance(pert, Ball) and not pert.state_dependent:
                dist = max(0.0, norm_eval(pert.norm, u0) - pert.radius)
                if dist > self.tol:
                    raise MembershipError(f"fixed bias lies {dist:.3g} outside the perturbation set")
                return lambda k, x, fx: u0

            def offset(k, x, fx):
                dist = _offset_distance(hmap, x, u0)
                if dist > self.tol:
                    raise MembershipError(f"fixed bias lies {dist:.3g} outside H(x) at step {k}")
                return u0

            return offset
        # uniform
        if rng is None:
            raise ValueError("uniform selection needs a random generator")
        if isinstance(pert, Offsets):
            idx = rng.integers(0, len(pert.points), size=n)
            pts = pert.points
            return lambda k, x, fx: pts[idx[k]]
        draws = unit_ball_sample(pert.norm, d, rng, n)
        if pert.state_dependent:
            return lambda k, x, fx: pert.radius_at(x) * draws[k]
        scaled = pert.radius * draws
        return lambda k, x, fx: scaled[k]


def _offset_distance(hmap: SetValuedMap, x, u) -> float:
    pert = hmap.perturbation
    if pert is None:
        return float(np.linalg.norm(u))
    if isinstance(pert, Ball):
        return max(0.0, norm_eval(pert.norm, u) - pert.radius_at(x))
    return _hull_distance(pert.points, np.asarray(u, float))


def select(
    hmap: SetValuedMap,
    x,
    strategy: SelectionStrategy,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (hmap.dim,):
        raise ValueError(f"expected a vector of dimension {hmap.dim}")
    fx = hmap.F(x)
    return fx + strategy.prepare(hmap, 1, rng)(0, x, fx)


@dataclass
class MarchaudReport:
    points: np.ndarray
    sup_norms: np.ndarray
    bounds: np.ndarray
    K: float
    passed: bool
    convex_compact: str = "by construction"
    upper_semicontinuous: str = "by construction, not numerically tested"

    @property
    def violations(self) -> np.ndarray:
        return self.points[self.sup_norms > self.bounds]


def marchaud_report(hmap: SetValuedMap, grid, K: float) -> MarchaudReport:
    """Check sup_{w in H(x)} ||w|| <= K (1 + ||x||) on every grid point."""
    pts = as_finite_set(grid)
    sups = np.array([hmap.sup_norm(p) for p in pts])
    bounds = K * (1.0 + np.linalg.norm(pts, axis=1))
    return MarchaudReport(pts, sups, bounds, K, bool(np.all(sups <= bounds)))


# --------------------------------------------------------------------------- Euler solutions


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    selections: np.ndarray
    h: float

    def to_csv(self, path) -> None:
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(d)])
            for t, s in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in s])


def n_steps(h: float, T_h: float) -> int:
    if not (h > 0 and T_h > 0):
        raise ValueError("step h and horizon T_h must be positive")
    return max(1, math.ceil(T_h / h - 1e-9))


def euler_solve(
    hmap: SetValuedMap,
    x0,
    h: float,
    T_h: float,
    strategy: SelectionStrategy | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Explicit Euler solution of x' in H(x) with a fresh selection every step."""
    strategy = strategy or SelectionStrategy()
    n = n_steps(h, T_h)
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((n + 1, hmap.dim))
    sels = np.empty((n, hmap.dim))
    states[0] = x
    offset = strategy.prepare(hmap, n, rng)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            fx = hmap.F(x)
            y = fx + offset(k, x, fx)
            x_new = x + h * y
            if not np.all(np.isfinite(x_new)) or np.abs(x_new).max() > DIVERGENCE_THRESHOLD:
                raise DivergedError(f"Euler solution diverged at step {k + 1}", x, k)
            sels[k] = y
            states[k + 1] = x = x_new
    return Trajectory(h * np.arange(n + 1), states, sels, h)


def euler_batch(hmap: SetValuedMap, X0: np.ndarray, offset: np.ndarray, h: float, n: int, every: int = 1):
    """Yield (step, states) of row-wise Euler solutions driven by a fixed offset direction."""
    X = np.array(X0, dtype=float)
    pert = hmap.perturbation
    scale_rows = isinstance(pert, Ball) and pert.state_dependent
    yield 0, X
    for k in range(1, n + 1):
        U = offset if not scale_rows else np.array([pert.radius_at(r) for r in X])[:, None] * offset
        X = X + h * (hmap.F_batch(X) + U)
        if k % every == 0 or k == n:
            yield k, X


# --------------------------------------------------------------------------- Lyapunov construction


@dataclass
class LyapunovEstimate:
    """V(x) = max over sampled solutions and t in {0, h, ..., T_h} of d(x(t), A) g(t).

    g(t) = d_g - (d_g - c) exp(-t) is increasing with c <= g < d_g. The supremum over
    all solutions is replaced by the centre selection and the extreme offsets.
    """

    hmap: SetValuedMap
    attractor: np.ndarray
    c: float
    d_g: float
    T_h: float
    h: float
    tol: float = 1e-3

    def g(self, t):
        return self.d_g - (self.d_g - self.c) * np.exp(-np.asarray(t, float))

    @property
    def center(self) -> np.ndarray:
        return self.attractor.mean(axis=0)

    def distance_to_attractor(self, X: np.ndarray) -> np.ndarray:
        if len(self.attractor) == 1:
            return np.linalg.norm(X - self.attractor[0], axis=1)
        return distances(X, self.attractor, NormSpec.euclidean()).min(axis=1)

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = n_steps(self.h, self.T_h)
        dirs = self.hmap.extreme_offsets()
        best = np.zeros(len(X))
        for u in dirs:
            last = None
            for k, S in euler_batch(self.hmap, X, u, self.h, n):
                dist = self.distance_to_attractor(S)
                if not np.all(np.isfinite(dist)):
                    raise DivergedError("Lyapunov trajectory diverged", S, k)
                best = np.maximum(best, dist * self.g(k * self.h))
                last = dist
            if np.any(last > self.tol):
                worst = int(np.argmax(last))
                raise HorizonTooShortError(
                    f"trajectory from {X[worst]} is {last[worst]:.3g} from the attractor at T_h={self.T_h}"
                )
        return best

    def __call__(self, x) -> float:
        return float(self.evaluate(np.asarray(x, float)[None, :])[0])

    def to_csv(self, path, grid) -> None:
        pts = as_finite_set(grid)
        vals = self.evaluate(pts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{i + 1}" for i in range(pts.shape[1])] + ["V"])
            for p, v in zip(pts, vals):
                w.writerow([f"{c:.17g}" for c in p] + [f"{v:.17g}"])


def lyapunov_build(
    hmap: SetValuedMap,
    attractor,
    c: float,
    d_g: float,
    T_h: float,
    h: float,
    tol: float = 1e-3,
    probe=None,
) -> LyapunovEstimate:
    """Build the trajectory-maximum Lyapunov function; ``probe`` points are evaluated
    eagerly so a short horizon fails at construction time."""
    if not 0 < c < d_g:
        raise ValueError("need 0 < c < d_g")
    att = as_finite_set(attractor)
    if att.shape[1] != hmap.dim:
        raise ValueError("attractor samples have the wrong dimension")
    n_steps(h, T_h)
    est = LyapunovEstimate(hmap, att, float(c), float(d_g), float(T_h), float(h), tol)
    if probe is not None:
        est.evaluate(as_finite_set(probe))
    return est


# --------------------------------------------------------------------------- inward directing sets


def sphere_directions(d: int, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    if d == 1:
        return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)[:, None]
    if d == 2:
        ang = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = rng or np.random.default_rng(0)
    g = rng.normal(size=(n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class NormBall:
    """Open ball {x : ||x - center||_norm < radius}."""

    center: tuple[float, ...]
    radius: float
    norm: NormSpec

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(v) for v in np.ravel(self.center)))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def threshold(self) -> float:
        return self.radius

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    def value(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        return norm_rows(self.norm, X - self.c)

    def boundary(self, n: int, rng=None) -> np.ndarray:
        dirs = sphere_directions(len(self.center), n, rng)
        return self.c + self.radius * dirs / norm_rows(self.norm, dirs)[:, None]

    def nearest(self, x) -> np.ndarray:
        """Euclidean nearest point of the closed ball."""
        x = np.asarray(x, float)
        z = x - self.c
        kind = self.norm.kind
        if kind == "euclidean":
            r = np.linalg.norm(z)
            return x.copy() if r <= self.radius else self.c + z * (self.radius / r)
        if kind == "weighted-max":
            half = self.radius * self.norm.w
            return self.c + np.clip(z, -half, half)
        if norm_eval(self.norm, z) <= self.radius:
            return x.copy()
        return self.c + _project_weighted_p(z, self.norm, self.radius)


def _project_weighted_p(z: np.ndarray, norm: NormSpec, radius: float) -> np.ndarray:
    from scipy.optimize import minimize

    cons = {"type": "ineq", "fun": lambda y: radius - norm_eval(norm, y)}
    start = radius * z / norm_eval(norm, z)
    res = minimize(lambda y: np.sum((y - z) ** 2), start, constraints=[cons], method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    y = res.x
    scale = norm_eval(norm, y)
    return y if scale <= radius else y * (radius / scale)


@dataclass(frozen=True)
class Sublevel:
    """Open sublevel set {x : V(x) < level}, star-shaped around ``center``."""

    V: Callable
    level: float
    center: tuple[float, ...]
    bisect_tol: float = 1e-9
    max_radius: float = 1e3

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(v) for v in np.ravel(self.center)))

    @property
    def threshold(self) -> float:
        return self.level

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center)

    def value(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        if hasattr(self.V, "evaluate"):
            return np.asarray(self.V.evaluate(X))
        return np.array([self.V(row) for row in X])

    def _bisect(self, inside: np.ndarray, outside: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bisect each segment inside[i] -> outside[i] for V = level."""
        lo, hi = inside.copy(), outside.copy()
        while np.max(np.linalg.norm(hi - lo, axis=1)) > self.bisect_tol:
            mid = 0.5 * (lo + hi)
            below = self.value(mid) <= self.level
            lo[below] = mid[below]
            hi[~below] = mid[~below]
        return lo, hi

    def boundary(self, n: int, rng=None) -> np.ndarray:
        dirs = sphere_directions(len(self.center), n, rng)
        c = self.c
        s = np.full(len(dirs), 1.0)
        for _ in range(64):
            above = self.value(c + s[:, None] * dirs) > self.level
            if above.all():
                break
            s = np.where(above, s, 2 * s)
            if s.max() > self.max_radius:
                raise ValueError("sublevel set is unbounded along a sampled ray; lower the level")
        lo, hi = self._bisect(np.broadcast_to(c, dirs.shape).copy(), c + s[:, None] * dirs)
        return lo

    def nearest(self, x) -> np.ndarray:
        """First point with V <= level on the segment from x to the centre."""
        x = np.asarray(x, float)
        if self.value(x)[0] <= self.level:
            return x.copy()
        lo, _ = self._bisect(self.c[None, :], x[None, :])
        return lo[0]


SetShape = Union[NormBall, Sublevel]


@dataclass(frozen=True)
class InwardSetPair:
    """Open sets B (inner) and C (outer) with closure(B) inside C."""

    B: SetShape
    C: SetShape

    def __post_init__(self) -> None:
        if type(self.B) is type(self.C) and not self.B.threshold < self.C.threshold:
            raise ValueError("need R_b < R_c")

    @property
    def R_b(self) -> float:
        return self.B.threshold

    @property
    def R_c(self) -> float:
        return self.C.threshold

    def in_B(self, x) -> bool:
        return bool(self.B.value(x)[0] < self.R_b)

    def in_C(self, x) -> bool:
        return bool(self.C.value(x)[0] < self.R_c)

    def in_closure_C(self, x) -> bool:
        return bool(self.C.value(x)[0] <= self.R_c)

    def check_nesting(self, n: int = 64, rng=None) -> bool:
        """Every sampled point of the boundary of B lies in C."""
        pts = self.B.boundary(n, rng)
        return bool(np.all(self.C.value(pts) < self.R_c))


def ball_pair(center, r_b: float, r_c: float, norm: NormSpec) -> InwardSetPair:
    return InwardSetPair(NormBall(center, r_b, norm), NormBall(center, r_c, norm))


def build_inward_pair(V: LyapunovEstimate, R_b: float, R_c: float) -> InwardSetPair:
    if not 0 < R_b < R_c:
        raise ValueError("need 0 < R_b < R_c")
    center = tuple(V.center)
    return InwardSetPair(Sublevel(V, R_b, center), Sublevel(V, R_c, center))


@dataclass
class InwardCheck:
    passed: bool
    witness: np.ndarray | None = None
    witness_offset: np.ndarray | None = None
    worst_excess: float = 0.0
    n_trajectories: int = 0

    def __bool__(self) -> bool:
        return self.passed


def inward_check(
    pair: InwardSetPair,
    hmap: SetValuedMap,
    n_boundary: int,
    h: float,
    T_h: float,
    margin: float = 0.01,
    n_checkpoints: int | None = None,
    rng=None,
) -> InwardCheck:
    """Euler solutions from sampled points of the boundary of C must stay in C.

    A solution counts as leaving only once its level exceeds R_c (1 + margin);
    staying on the boundary within that band is read as grazing.
    """
    starts = pair.C.boundary(n_boundary, rng)
    n = n_steps(h, T_h)
    every = 1 if n_checkpoints is None else max(1, n // n_checkpoints)
    if isinstance(pair.C, Sublevel) and n_checkpoints is None:
        every = max(1, n // 50)
    limit = pair.R_c * (1.0 + margin)
    worst = -np.inf
    count = 0
    for u in hmap.extreme_offsets():
        count += len(starts)
        for k, S in euler_batch(hmap, starts, u, h, n, every):
            if k == 0:
                continue
            vals = pair.C.value(S)
            excess = vals - pair.R_c
            worst = max(worst, float(np.max(excess)))
            bad = vals > limit
            if np.any(bad) or not np.all(np.isfinite(vals)):
                i = int(np.argmax(np.where(np.isfinite(vals), vals, np.inf)))
                return InwardCheck(False, starts[i].copy(), np.asarray(u).copy(), float(excess[i]), count)
    return InwardCheck(True, None, None, worst, count)
