"""The stochastic approximation iterate x_{n+1} = x_n + a(n) (y_n + M_{n+1}), its
projective partner, coupled runs and trajectory diagnostics."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    DIVERGENCE_THRESHOLD,
    InwardSetPair,
    NormBall,
    SelectionStrategy,
    SetValuedMap,
)
from .norms import NormSpec, norm_rows

# --------------------------------------------------------------------------- step sizes

SCHEDULE_KINDS = ("harmonic", "polynomial", "explicit")


@dataclass(frozen=True)
class StepSchedule:
    """a(n) = a0/(n+shift) (harmonic), a0/(n+shift)^q (polynomial) or values[n] (explicit).

    ``values`` may be a sequence or a callable n -> a(n).
    """

    kind: str = "harmonic"
    a0: float = 1.0
    q: float = 1.0
    shift: float = 1.0
    values: Sequence[float] | Callable[[int], float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "explicit" and self.values is None:
            raise ValueError("explicit schedule needs values")
        if not self.shift > 0:
            raise ValueError("shift must be positive")

    @classmethod
    def harmonic(cls, a0: float = 1.0, shift: float = 1.0) -> StepSchedule:
        return cls("harmonic", a0, 1.0, shift)

    @classmethod
    def polynomial(cls, q: float, a0: float = 1.0, shift: float = 1.0) -> StepSchedule:
        return cls("polynomial", a0, q, shift)

    @classmethod
    def explicit(cls, values) -> StepSchedule:
        return cls("explicit", values=values if callable(values) else tuple(float(v) for v in values))

    def array(self, n: int) -> np.ndarray:
        k = np.arange(n, dtype=float)
        if self.kind == "harmonic":
            return self.a0 / (k + self.shift)
        if self.kind == "polynomial":
            return self.a0 / (k + self.shift) ** self.q
        if callable(self.values):
            return np.array([self.values(i) for i in range(n)], dtype=float)
        if n > len(self.values):
            raise ValueError(f"explicit schedule has only {len(self.values)} entries, {n} requested")
        return np.asarray(self.values[:n], dtype=float)

    def __call__(self, n: int) -> float:
        return float(self.array(n + 1)[n])

    def to_dict(self) -> dict:
        if self.kind == "explicit":
            if callable(self.values):
                raise ValueError("callable schedules cannot be serialised")
            return {"kind": "explicit", "values": list(self.values)}
        return {"kind": self.kind, "a0": self.a0, "q": self.q, "shift": self.shift}


@dataclass(frozen=True)
class Verdict:
    status: str  # pass | fail | inconclusive
    reason: str

    def __bool__(self) -> bool:
        return self.status == "pass"


EXPLICIT_HORIZON = 10**6


def validate_schedule(s: StepSchedule) -> Verdict:
    """Check sum a(n) = inf and sum a(n)^2 < inf.

    Closed-form kinds are decided symbolically. Explicit schedules get a heuristic on
    up to 10^6 terms: the decay exponent q is fitted on log a(n) over the last two
    decades. q < 0.45 or q > 1.05 fails, 0.55 < q < 0.95 passes. Near q = 1 the
    schedule passes only if the partial sums grow by equal amounts per decade (log
    growth); near q = 1/2 and otherwise in the bands it is inconclusive.
    """
    if s.kind != "explicit":
        if not s.a0 > 0:
            raise ValueError("a0 must be positive")
        if s.kind == "harmonic":
            return Verdict("pass", "a0/(n+s): sum diverges like log n, squares are summable")
        if s.q <= 0.5:
            return Verdict("fail", f"q={s.q} <= 1/2: sum of a(n)^2 diverges")
        if s.q > 1:
            return Verdict("fail", f"q={s.q} > 1: sum of a(n) is finite")
        return Verdict("pass", f"q={s.q} in (1/2, 1]")

    n = EXPLICIT_HORIZON if callable(s.values) else min(len(s.values), EXPLICIT_HORIZON)
    if n < 1000:
        return Verdict("inconclusive", f"only {n} terms; need at least 1000")
    with np.errstate(all="ignore"):
        a = s.array(n)
    if not np.all(np.isfinite(a)):
        return Verdict("fail", "non-finite step sizes")
    if np.any(a < 0):
        return Verdict("fail", "negative step sizes")
    tail = a[n // 100 :]
    if np.all(tail == 0):
        return Verdict("fail", "step sizes vanish: sum of a(n) is finite")
    pos = tail > 0
    if pos.mean() < 0.5:
        return Verdict("inconclusive", "tail is mostly zero")
    idx = np.arange(n // 100, n)[pos] + 1.0
    slope = np.polyfit(np.log(idx), np.log(tail[pos]), 1)[0]
    q = -slope
    if q > 1.05:
        return Verdict("fail", f"fitted decay exponent {q:.3f} > 1: sum of a(n) is finite")
    if q < 0.45:
        return Verdict("fail", f"fitted decay exponent {q:.3f} < 1/2: squares not summable")
    if 0.55 < q < 0.95:
        return Verdict("pass", f"fitted decay exponent {q:.3f} in (1/2, 1)")
    if q >= 0.95:
        S = np.cumsum(a)
        inc_hi = S[n - 1] - S[n // 10 - 1]
        inc_lo = S[n // 10 - 1] - S[n // 100 - 1]
        ratio = inc_hi / inc_lo if inc_lo > 0 else 0.0
        if ratio >= 0.95:
            return Verdict("pass", f"exponent {q:.3f}, partial sums grow logarithmically (ratio {ratio:.3f})")
        return Verdict("inconclusive", f"exponent {q:.3f}, decade increment ratio {ratio:.3f}")
    return Verdict("inconclusive", f"fitted decay exponent {q:.3f} is too close to 1/2")


# --------------------------------------------------------------------------- noise

NOISE_KINDS = ("zero", "bounded-iid", "state-scaled-gaussian")
BOUNDED_DISTRIBUTIONS = ("uniform-ball", "sphere", "uniform-cube")


@dataclass(frozen=True)
class NoiseModel:
    """Noise M_{n+1}.

    bounded-iid: i.i.d. zero-mean draws with ||M|| <= D (Euclidean).
    state-scaled-gaussian: M = sqrt(K (1 + ||x_n||^2) / d) * N(0, I), so
    E[||M||^2 | x_n] = K (1 + ||x_n||^2).
    """

    kind: str = "zero"
    D: float = 0.0
    distribution: str = "uniform-ball"
    K: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "bounded-iid":
            if not self.D > 0:
                raise ValueError("bounded noise needs D > 0")
            if self.distribution not in BOUNDED_DISTRIBUTIONS:
                raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.kind == "state-scaled-gaussian" and not self.K > 0:
            raise ValueError("state-scaled noise needs K > 0")

    @classmethod
    def bounded(cls, D: float, distribution: str = "uniform-ball") -> NoiseModel:
        return cls("bounded-iid", D, distribution)

    @classmethod
    def gaussian(cls, K: float) -> NoiseModel:
        return cls("state-scaled-gaussian", K=K)

    @property
    def state_dependent(self) -> bool:
        return self.kind == "state-scaled-gaussian"

    def raw(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        """The n underlying draws; bounded kinds return M directly."""
        if self.kind == "zero":
            return np.zeros((n, d))
        if self.kind == "state-scaled-gaussian":
            return rng.normal(size=(n, d))
        if self.distribution == "uniform-cube":
            return rng.uniform(-1.0, 1.0, size=(n, d)) * (self.D / np.sqrt(d))
        g = rng.normal(size=(n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        if self.distribution == "sphere":
            return self.D * g
        return self.D * g * rng.uniform(size=(n, 1)) ** (1.0 / d)

    def scale(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.K * (1.0 + x @ x) / x.size))

    def sample(self, rng: np.random.Generator, x, n: int) -> np.ndarray:
        """n conditional draws of M given the current state x."""
        x = np.asarray(x, dtype=float)
        base = self.raw(rng, n, x.size)
        return self.scale(x) * base if self.state_dependent else base

    def to_dict(self) -> dict:
        return {"kind": self.kind, "D": self.D, "distribution": self.distribution, "K": self.K}


# --------------------------------------------------------------------------- traces


@dataclass
class RunTrace:
    """Record of one run. Row n of y, M, u, a, g belongs to the step x_n -> x_{n+1}."""

    x: np.ndarray
    y: np.ndarray
    M: np.ndarray
    u: np.ndarray
    a: np.ndarray
    g: np.ndarray
    x_tilde0: np.ndarray
    diverged_at: int | None = None
    projective: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.a)

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    @property
    def t(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.a)])

    @property
    def x_tilde(self) -> np.ndarray:
        """Pre-projection points x_n + a(n)(y_n + M_{n+1}), n = 0..n_iter-1."""
        return self.x[1:] - self.g

    @property
    def projection_indices(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.g != 0.0, axis=1))

    @property
    def last_projection_index(self) -> int:
        """Index N of the last iterate produced by a projection (0 when none occurred)."""
        idx = self.projection_indices
        return int(idx[-1] + 1) if idx.size else 0

    def g_norm(self) -> np.ndarray:
        return np.linalg.norm(self.g, axis=1)

    def to_csv(self, path) -> None:
        d = self.x.shape[1]
        t = self.t
        gn = self.g_norm()
        head = ["n", "t_n", "a_n"] + [f"x_{i + 1}" for i in range(d)]
        head += [f"y_{i + 1}" for i in range(d)] + [f"M_{i + 1}" for i in range(d)] + ["g_norm"]
        fmt = "{:.17g}".format
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for n in range(self.n_iter):
                w.writerow(
                    [n, fmt(t[n]), fmt(self.a[n])]
                    + [fmt(v) for v in self.x[n]]
                    + [fmt(v) for v in self.y[n]]
                    + [fmt(v) for v in self.M[n]]
                    + [fmt(gn[n])]
                )


def project(pair: InwardSetPair, x) -> np.ndarray:
    """x itself inside C, otherwise a Euclidean-nearest point of closure(B).

    Nearest points are unique for the convex balls used here; sublevel sets use the
    first point with V <= R_b on the segment towards the attractor centre.
    """
    x = np.asarray(x, dtype=float)
    if pair.in_C(x):
        return x.copy()
    return pair.B.nearest(x)


def _fast_in_C(pair: InwardSetPair):
    C = pair.C
    if isinstance(C, NormBall):
        c, r, norm = C.c, C.radius, C.norm
        if norm.kind == "weighted-max":
            w = norm.w
            return lambda x: float(np.max(np.abs(x - c) / w)) < r
        if norm.kind == "euclidean":
            r2 = r * r
            return lambda x: float((x - c) @ (x - c)) < r2
    return pair.in_C


def _streams(seed: int) -> list[np.random.SeedSequence]:
    """Independent (noise, selection) streams of a run."""
    return np.random.SeedSequence(seed).spawn(2)


def noise_draws(noise: NoiseModel, n_iter: int, d: int, seed: int) -> np.ndarray:
    """The raw noise a run with this seed consumes; equals its M for state-free kinds."""
    return noise.raw(np.random.default_rng(_streams(seed)[0]), n_iter, d)


def _iterate(
    hmap: SetValuedMap,
    x0,
    schedule: StepSchedule,
    noise: NoiseModel,
    strategy: SelectionStrategy,
    n_iter: int,
    seed: int,
    pair: InwardSetPair | None = None,
    selection_key: int | None = None,
) -> RunTrace:
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    d = hmap.dim
    x_tilde0 = np.asarray(x0, dtype=float).copy()
    if x_tilde0.shape != (d,):
        raise ValueError(f"x0 must have dimension {d}")
    noise_ss, sel_ss = _streams(seed)
    if selection_key is not None:
        sel_ss = np.random.SeedSequence([seed, selection_key])
    raw = noise.raw(np.random.default_rng(noise_ss), n_iter, d)
    offset = strategy.prepare(hmap, n_iter, np.random.default_rng(sel_ss))
    a = schedule.array(n_iter)

    X = np.empty((n_iter + 1, d))
    Y = np.empty((n_iter, d))
    U = np.empty((n_iter, d))
    M = raw if not noise.state_dependent else np.empty((n_iter, d))
    G = np.zeros((n_iter, d))
    x = project(pair, x_tilde0) if pair is not None else x_tilde0.copy()
    X[0] = x
    F = hmap.F
    scaled = noise.state_dependent
    in_C = _fast_in_C(pair) if pair is not None else None
    nearest = pair.B.nearest if pair is not None else None
    limit = DIVERGENCE_THRESHOLD**2
    diverged_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_iter):
            fx = F(x)
            u = offset(n, x, fx)
            y = fx + u
            if scaled:
                M[n] = noise.scale(x) * raw[n]
            xt = x + a[n] * (y + M[n])
            Y[n] = y
            U[n] = u
            if in_C is not None and not in_C(xt):
                z = nearest(xt)
                G[n] = z - xt
                xt = z
            if not (xt @ xt <= limit):
                diverged_at = n + 1
                X[n + 1] = xt
                break
            X[n + 1] = xt
            x = xt
    if diverged_at is not None:
        k = diverged_at
        return RunTrace(X[: k + 1], Y[:k], M[:k].copy(), U[:k], a[:k], G[:k], x_tilde0, k, pair is not None)
    return RunTrace(X, Y, M, U, a, G, x_tilde0, None, pair is not None)


def run_saa(
    hmap: SetValuedMap,
    x0,
    schedule: StepSchedule,
    noise: NoiseModel,
    strategy: SelectionStrategy,
    n_iter: int,
    seed: int = 0,
    check_schedule: bool = True,
) -> RunTrace:
    """Run the unprojected iterate. Identical (seed, config) give identical traces.

    Crossing ||x_n|| > 1e12 (or overflow) stops the run with ``diverged_at`` set.
    """
    if check_schedule:
        _require_valid(schedule)
    return _iterate(hmap, x0, schedule, noise, strategy, n_iter, seed)


def run_projective(
    hmap: SetValuedMap,
    x0,
    schedule: StepSchedule,
    noise: NoiseModel,
    strategy: SelectionStrategy,
    pair: InwardSetPair,
    n_iter: int,
    seed: int = 0,
    check_schedule: bool = True,
) -> RunTrace:
    """Projective partner: x0 is projected first, then every exit from C is projected
    back onto closure(B); the corrections are stored in ``g``."""
    if check_schedule:
        _require_valid(schedule)
    return _iterate(hmap, x0, schedule, noise, strategy, n_iter, seed, pair)


def _require_valid(schedule: StepSchedule) -> None:
    verdict = validate_schedule(schedule)
    if verdict.status == "fail":
        raise ValueError(f"step schedule rejected: {verdict.reason}")


# --------------------------------------------------------------------------- comparability


@dataclass
class ComparabilityReport:
    gap: np.ndarray
    N: int
    sup_gap: float
    norm: NormSpec

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.sup_gap))

    def to_json(self, path, gap_file: str | None = None) -> None:
        with open(path, "w") as fh:
            json.dump({"N": self.N, "sup_gap": self.sup_gap, "per_iterate_gap_file": gap_file}, fh, indent=2)
        if gap_file is not None:
            np.savetxt(gap_file, self.gap, fmt="%.17g", header="gap", comments="")


def comparability(main: RunTrace, partner: RunTrace, norm: NormSpec) -> ComparabilityReport:
    n = min(len(main.x), len(partner.x))
    gap = norm_rows(norm, main.x[:n] - partner.x[:n])
    if main.diverged or partner.diverged:
        gap = np.concatenate([gap, [np.inf]])
    N = partner.last_projection_index
    return ComparabilityReport(gap, N, float(np.max(gap[N:])), norm)


def coupled_run(
    hmap: SetValuedMap,
    x0,
    schedule: StepSchedule,
    noise: NoiseModel,
    strategy: SelectionStrategy,
    pair: InwardSetPair,
    n_iter: int,
    seed: int = 0,
    norm: NormSpec | None = None,
    x0_partner=None,
    shared_selections: bool = True,
) -> tuple[RunTrace, RunTrace, ComparabilityReport]:
    """Run the iterate and its projective partner on one sample path.

    Both runs use the same seed, hence the same noise draws and, unless
    ``shared_selections`` is off, the same selection draws (state-scaled noise and
    state-dependent balls rescale the shared draw).
    """
    _require_valid(schedule)
    main = _iterate(hmap, x0, schedule, noise, strategy, n_iter, seed)
    start = x0 if x0_partner is None else x0_partner
    key = None if shared_selections else 1
    partner = _iterate(hmap, start, schedule, noise, strategy, n_iter, seed, pair, key)
    norm = norm or NormSpec.euclidean(hmap.dim)
    return main, partner, comparability(main, partner, norm)


# --------------------------------------------------------------------------- diagnostics


@dataclass
class InterpolatedPath:
    """Piecewise-linear X(t): X(t_n) = x_n, linear towards the pre-projection point on
    [t_n, t_{n+1}), so it jumps exactly where a projection happened."""

    t: np.ndarray
    x: np.ndarray
    x_next: np.ndarray

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        n_seg = len(self.x_next)
        idx = np.clip(np.searchsorted(self.t, s, side="right") - 1, 0, n_seg)
        out = np.empty((len(s), self.x.shape[1]))
        at_end = idx >= n_seg
        out[at_end] = self.x[-1]
        i = idx[~at_end]
        lam = ((s[~at_end] - self.t[i]) / (self.t[i + 1] - self.t[i]))[:, None]
        out[~at_end] = (1.0 - lam) * self.x[i] + lam * self.x_next[i]
        return out

    @property
    def jump_times(self) -> np.ndarray:
        jumps = np.any(self.x[1 : len(self.x_next) + 1] != self.x_next, axis=1)
        return self.t[1 : len(self.x_next) + 1][jumps]


def interpolate(trace: RunTrace) -> InterpolatedPath:
    if trace.n_iter < 1:
        raise ValueError("empty trace")
    k = len(trace.a)
    return InterpolatedPath(trace.t[: k + 1], trace.x[: k + 1], trace.x_tilde[:k])


@dataclass
class WindowCheck:
    max_sum: float
    k_argmax: int
    n_windows: int
    partial: bool


def window_sums(
    a: np.ndarray, M: np.ndarray, T: float, k_min: int = 0, k_max: int | None = None
) -> WindowCheck:
    """max over k of ||sum_{n=k}^{m_T(k)} a(n) M_{n+1}||, m_T(k) the first m >= k with
    sum_{n=k}^m a(n) >= T. Windows running past the data are dropped; if none is
    complete the partial windows are used and a warning is issued."""
    a = np.asarray(a, dtype=float)
    M = np.asarray(M, dtype=float)
    n = len(a)
    if n < 1:
        raise ValueError("empty trace")
    k_max = n - 1 if k_max is None else min(k_max, n - 1)
    if k_min > k_max:
        raise ValueError("empty range of window starts")
    C = np.concatenate([[0.0], np.cumsum(a)])
    S = np.vstack([np.zeros(M.shape[1]), np.cumsum(a[:, None] * M, axis=0)])
    ks = np.arange(k_min, k_max + 1)
    # window [k, m] is complete iff C[m+1] - C[k] >= T; ends holds m+1
    ends = np.searchsorted(C, C[ks] + T, side="left")
    # the cumulative sum may round a window short
    short = (ends <= n) & (C[np.minimum(ends, n)] - C[ks] < T)
    ends[short] += 1
    ends = np.maximum(ends, ks + 1)
    complete = ends <= n
    partial = False
    if not complete.any():
        warnings.warn("T exceeds the elapsed time of every window; using partial windows", stacklevel=3)
        partial = True
        complete = np.ones_like(complete)
    ends = np.minimum(ends, n)
    ks_c, ends_c = ks[complete], ends[complete]
    sums = np.linalg.norm(S[ends_c] - S[ks_c], axis=1)
    j = int(np.argmax(sums))
    return WindowCheck(float(sums[j]), int(ks_c[j]), int(len(ks_c)), partial)


def noise_window_check(
    trace: RunTrace, T: float, k_min: int = 0, k_max: int | None = None
) -> WindowCheck:
    """Noise window maximum of a recorded trace; see ``window_sums``."""
    return window_sums(trace.a, trace.M, T, k_min, k_max)


@dataclass
class SeparationReport:
    delta: float
    d: float
    D1: float
    event_times: np.ndarray
    min_separation: float
    passed: bool


def boundary_gap(pair: InwardSetPair, n_samples: int = 2048) -> float:
    """d = min over the boundary of C of the Euclidean distance to closure(B)."""
    B, C = pair.B, pair.C
    if isinstance(B, NormBall) and isinstance(C, NormBall) and B.norm == C.norm and B.center == C.center:
        if C.norm.kind == "euclidean":
            return C.radius - B.radius
        if C.norm.kind == "weighted-max":
            return float(np.min((C.radius - B.radius) * C.norm.w))
    pts = C.boundary(n_samples)
    near = np.array([B.nearest(p) for p in pts])
    return float(np.linalg.norm(pts - near, axis=1).min())


def field_bound(hmap: SetValuedMap, pair: InwardSetPair, n_samples: int = 2048) -> float:
    """Sampled sup over closure(C) of sup_{y in H(x)} ||y||."""
    C = pair.C
    bnd = C.boundary(n_samples)
    c = C.c
    shells = [c + s * (bnd - c) for s in np.linspace(0.0, 1.0, 11)]
    pts = np.vstack(shells)
    return float(max(hmap.sup_norm(p) for p in pts))


def separation_check(
    trace: RunTrace, pair: InwardSetPair, hmap: SetValuedMap, noise_bound: float, slack: float = 1e-6
) -> SeparationReport:
    """Consecutive projection events must be at least d / (2 D1) apart in cumulative time,
    with D1 = noise bound + sup of ||y|| over closure(C)."""
    d = boundary_gap(pair)
    D1 = noise_bound + field_bound(hmap, pair)
    delta = d / (2.0 * D1)
    times = trace.t[trace.projection_indices + 1]
    sep = float(np.min(np.diff(times))) if len(times) > 1 else np.inf
    return SeparationReport(delta, d, D1, times, sep, bool(sep >= delta - slack))
