"""Stochastic approximation for fixed points x in Tx of contractive set-valued maps,
plus the coupled boundedness check for generic contractive stage maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .dynamics import (
    Ball,
    InwardSetPair,
    Offsets,
    SelectionStrategy,
    SetValuedMap,
    _hull_distance,
    ball_pair,
    euler_solve,
    unit_ball_sample,
)
from .mdp_avi import GapCheck, _gap_check
from .norms import MetricSpec, NormSpec, hausdorff, norm_eval, norm_rows, sample_ball
from .saa import ComparabilityReport, NoiseModel, RunTrace, StepSchedule, coupled_run, project, run_saa


@dataclass(frozen=True)
class ContractiveSetMap:
    """T(x) = F(x) + offsets, declared alpha-contractive in the Hausdorff metric of rho
    and of diameter at most D. ``affine`` holds (A, b) when F(x) = A x + b."""

    base: Callable[[np.ndarray], np.ndarray]
    dim: int
    offsets: Ball | Offsets | None
    metric: MetricSpec
    alpha: float
    D: float
    affine: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("declared modulus alpha must lie in (0, 1)")
        if self.D < 0:
            raise ValueError("diameter bound D must be nonnegative")

    @classmethod
    def affine_ball(cls, A, b, radius, metric: MetricSpec, alpha: float, D: float | None = None) -> ContractiveSetMap:
        """F(x) = A x + b plus a rho-ball; ``radius`` may be a function of x."""
        A = np.atleast_2d(np.asarray(A, float))
        b = np.asarray(b, float).reshape(-1)
        offsets = Ball(radius, metric.norm) if callable(radius) or radius > 0 else None
        if D is None:
            if callable(radius):
                raise ValueError("a state-dependent radius needs an explicit D")
            D = 2.0 * radius
        At = A.T.copy()
        return cls(lambda x: x @ At + b, b.size, offsets, metric, alpha, D, (A, b))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ContractiveSetMap:
        base = data["base"]
        if base.get("kind") != "affine":
            raise ValueError("only affine base maps can be loaded from a file")
        A = np.atleast_2d(np.asarray(base["A"], float))
        b = np.asarray(base["b"], float).reshape(-1)
        metric_data = data.get("metric", {"kind": "weighted-max", "weights": [1.0] * b.size})
        norm = NormSpec.from_dict(metric_data.get("norm", metric_data))
        metric = MetricSpec.from_norm(norm, b.size)
        off = data.get("offsets") or {"kind": "none"}
        kind = off["kind"]
        if kind == "ball":
            ball_norm = NormSpec.from_dict(off["norm"]) if "norm" in off else norm
            offsets = Ball(float(off["radius"]), ball_norm)
        elif kind == "list":
            offsets = Offsets(off["points"])
        elif kind == "none":
            offsets = None
        else:
            raise ValueError(f"unknown offsets kind {kind!r}")
        At = A.T.copy()
        return cls(lambda x: x @ At + b, b.size, offsets, metric, float(data["alpha"]), float(data["D"]), (A, b))

    @classmethod
    def from_json(cls, path) -> ContractiveSetMap:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def set_map(self) -> SetValuedMap:
        return SetValuedMap(self.base, self.dim, self.offsets, self.affine is not None)

    @property
    def mean_field(self) -> SetValuedMap:
        """x -> Tx - x."""
        return self.set_map.minus_identity()

    def F(self, x) -> np.ndarray:
        return np.asarray(self.base(np.asarray(x, float)), float)

    def base_fixed_point(self, tol: float = 1e-14, max_iter: int = 100_000) -> np.ndarray:
        """x_F = F(x_F): a linear solve for affine F, Banach iteration otherwise."""
        if self.affine is not None:
            A, b = self.affine
            return np.linalg.solve(np.eye(self.dim) - A, b)
        x = np.zeros(self.dim)
        for _ in range(max_iter):
            nxt = self.F(x)
            if self.metric(nxt, x) <= tol:
                return nxt
            x = nxt
        raise RuntimeError("base map iteration did not converge")

    def residual(self, x) -> float:
        """d_rho(x, Tx); analytic for rho-balls, Euclidean hull distance for offset lists."""
        x = np.asarray(x, float)
        fx = self.F(x)
        off = self.offsets
        if off is None:
            return self.metric(x, fx)
        if isinstance(off, Ball):
            if off.norm != self.metric.norm:
                raise ValueError("analytic residual needs the offset ball in the metric's norm")
            return max(0.0, self.metric(x, fx) - off.radius_at(x))
        return _hull_distance(off.points, x - fx)

    def hausdorff_between(self, x, y) -> float:
        """H_rho(Tx, Ty)."""
        fx, fy = self.F(x), self.F(y)
        off = self.offsets
        rho = self.metric.norm
        if off is None or isinstance(off, Offsets):
            # translates of one compact set sit at Hausdorff distance |shift|
            return norm_eval(rho, fx - fy)
        rx, ry = off.radius_at(x), off.radius_at(y)
        if off.norm == rho:
            return norm_eval(rho, fx - fy) + abs(rx - ry)
        if rx == ry:
            return norm_eval(rho, fx - fy)
        A, _ = sample_ball(fx, rx, off.norm, 25)
        B, _ = sample_ball(fy, ry, off.norm, 25)
        return hausdorff(A, B, rho)


@dataclass
class MapCertificate:
    contraction_ratio: float
    diameter: float
    dominance_ok: bool
    passed: bool
    witness: dict[str, Any] | None
    attractor_hypothesis: str = "declared"
    attractor_probe: float | None = None

    def __bool__(self) -> bool:
        return self.passed


def certify_map(
    tmap: ContractiveSetMap,
    n_pairs: int = 1000,
    grid=None,
    seed: int = 0,
    probe_starts: int = 0,
    probe_horizon: float = 20.0,
) -> MapCertificate:
    """Sampled checks of the contraction, diameter and metric-dominance hypotheses.

    The global-attractor hypothesis stays declared; with ``probe_starts`` > 0, Euler
    solutions of x' in Tx - x from scattered starts report their largest final residual.
    """
    rng = np.random.default_rng(seed)
    d = tmap.dim
    centre = np.zeros(d)
    X = centre + rng.normal(scale=5.0, size=(n_pairs, d))
    Y = X + rng.normal(size=(n_pairs, d)) * rng.uniform(1e-3, 5.0, size=(n_pairs, 1))
    witness = None
    worst = 0.0
    for x, y in zip(X, Y):
        rho = tmap.metric(x, y)
        if rho == 0:
            continue
        ratio = tmap.hausdorff_between(x, y) / rho
        if ratio > worst:
            worst = ratio
            if ratio >= 1 or ratio > tmap.alpha + 1e-12:
                witness = {"x": x.tolist(), "y": y.tolist(), "ratio": ratio}
    pts = X if grid is None else np.atleast_2d(np.asarray(grid, float))
    diam = max(tmap.set_map.diameter(p, tmap.metric.norm) for p in pts)
    if diam > tmap.D + 1e-12 and witness is None:
        i = int(np.argmax([tmap.set_map.diameter(p, tmap.metric.norm) for p in pts]))
        witness = {"x": pts[i].tolist(), "diameter": diam}
    C = tmap.metric.dominance_constant
    dom_ok = bool(np.all(np.linalg.norm(X - Y, axis=1) <= C * norm_rows(tmap.metric.norm, X - Y) * (1 + 1e-12)))
    passed = worst < 1 and worst <= tmap.alpha + 1e-12 and diam <= tmap.D + 1e-12 and dom_ok
    probe = None
    if probe_starts > 0:
        starts = centre + rng.normal(scale=5.0, size=(probe_starts, d))
        probe = max(
            tmap.residual(euler_solve(tmap.mean_field, s, 0.01, probe_horizon).states[-1]) for s in starts
        )
    return MapCertificate(float(worst), float(diam), dom_ok, bool(passed), witness, "declared", probe)


@dataclass
class FpResult:
    trace: RunTrace
    x_bar: np.ndarray
    residual: float
    x_F: np.ndarray
    partner: RunTrace | None = None
    gap: ComparabilityReport | None = None
    pair: InwardSetPair | None = None

    def summary(self) -> dict[str, Any]:
        out = {"residual": self.residual, "x_bar": self.x_bar.tolist(), "diverged": self.trace.diverged}
        if self.gap is not None:
            out.update({"N": self.gap.N, "sup_gap": self.gap.sup_gap})
        return out


PARTNER_D_FLOOR = 0.05


def partner_sets(tmap: ContractiveSetMap, radii: tuple[float, float] = (2.0, 4.0)) -> InwardSetPair:
    """rho-balls around the base fixed point with radii (D/(1 - alpha)) * radii."""
    scale = max(tmap.D, PARTNER_D_FLOOR) / (1 - tmap.alpha)
    return ball_pair(tmap.base_fixed_point(), scale * radii[0], scale * radii[1], tmap.metric.norm)


def run_fixed_point(
    tmap: ContractiveSetMap,
    x0,
    schedule: StepSchedule,
    noise: NoiseModel,
    strategy: SelectionStrategy,
    n_iter: int,
    seed: int = 0,
    tail_fraction: float = 0.1,
    partner: bool = True,
    partner_radii: tuple[float, float] = (2.0, 4.0),
    x0_partner=None,
) -> FpResult:
    """x_{n+1} = x_n + a(n)(y_n + M_{n+1}) with y_n in Tx_n - x_n, coupled with its
    projective partner on the same noise and selection draws."""
    hmap = tmap.mean_field
    pair = partner_sets(tmap, partner_radii) if partner else None
    if partner:
        trace, ptrace, gap = coupled_run(
            hmap, x0, schedule, noise, strategy, pair, n_iter, seed, tmap.metric.norm, x0_partner
        )
    else:
        trace, ptrace, gap = run_saa(hmap, x0, schedule, noise, strategy, n_iter, seed), None, None
    tail = max(1, int(round(tail_fraction * len(trace.x))))
    x_bar = trace.x[-tail:].mean(axis=0)
    return FpResult(trace, x_bar, tmap.residual(x_bar), tmap.base_fixed_point(), ptrace, gap, pair)


def fp_gap_bound_check(result: FpResult, alpha: float, D: float, slack: float = 1e-10) -> GapCheck:
    """rho(x_n, x^_n) <= max(2D/(1 - alpha), rho(x_N, x^_N)) for n >= N, and per step
    without projection: g_{n+1} <= g_n when 2D <= (1 - alpha) g_n, otherwise
    g_{n+1} <= 2D/(1 - alpha); both follow from g_{n+1} <= (1 - a) g_n + a(D + alpha g_n)."""
    if result.partner is None:
        raise ValueError("the run has no projective partner")
    norm = result.gap.norm
    base = _gap_check(result.trace, result.partner, norm, alpha, D, 2 * D, slack)
    main, partner = result.trace, result.partner
    n = min(len(main.x), len(partner.x))
    gap = norm_rows(norm, main.x[:n] - partner.x[:n])
    free = ~np.any(partner.g[: n - 1] != 0, axis=1)
    floor = 2 * D / (1 - alpha)
    case1 = 2 * D <= (1 - alpha) * gap[:-1]
    target = np.where(case1, gap[:-1], floor) + slack
    two_case_ok = bool(np.all((gap[1:] <= target)[free]))
    base.per_step_ok = base.per_step_ok and two_case_ok
    base.passed = base.per_step_ok and base.closed_form_ok
    return base


# ---------------------------------------------------------------------- generic stage maps


@dataclass(frozen=True)
class StageMap:
    """G_n(x, xi) = centre(n, x, xi) + rho-ball of radius D/2, alpha-contractive in x."""

    centre: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    dim: int
    alpha: float
    D: float
    metric: MetricSpec


@dataclass
class StageTraces:
    x: np.ndarray
    partner: np.ndarray
    g: np.ndarray
    norm: NormSpec

    @property
    def last_projection_index(self) -> int:
        idx = np.flatnonzero(np.any(self.g != 0.0, axis=1))
        return int(idx[-1] + 1) if idx.size else 0


def run_stage_pair(
    stage: StageMap,
    x0,
    n_iter: int,
    pair: InwardSetPair,
    noise: NoiseModel,
    seed: int = 0,
    x0_partner=None,
) -> StageTraces:
    """x_{n+1} in G_n(x_n, xi_n) and its projected partner with identical xi_n;
    the points picked inside the two balls are drawn independently."""
    d = stage.dim
    noise_ss, sel_a, sel_b = np.random.SeedSequence(seed).spawn(3)
    xi = noise.raw(np.random.default_rng(noise_ss), n_iter, d)
    r = stage.D / 2
    ua = r * unit_ball_sample(stage.metric.norm, d, np.random.default_rng(sel_a), n_iter)
    ub = r * unit_ball_sample(stage.metric.norm, d, np.random.default_rng(sel_b), n_iter)
    X = np.empty((n_iter + 1, d))
    Z = np.empty((n_iter + 1, d))
    G = np.zeros((n_iter, d))
    X[0] = x = np.asarray(x0, float)
    Z[0] = z = project(pair, x if x0_partner is None else x0_partner)
    for n in range(n_iter):
        x = stage.centre(n, x, xi[n]) + ua[n]
        zt = stage.centre(n, z, xi[n]) + ub[n]
        z = project(pair, zt)
        G[n] = z - zt
        X[n + 1], Z[n + 1] = x, z
    return StageTraces(X, Z, G, stage.metric.norm)


@dataclass
class BoundednessCheck:
    passed: bool
    N: int
    sup_gap: float
    bound: float

    def __bool__(self) -> bool:
        return self.passed


def generic_boundedness_check(traces: StageTraces, alpha: float, D: float, slack: float = 1e-10) -> BoundednessCheck:
    """sup_{n >= N+1} rho(x_n, x~_n) <= 2D/(1 - alpha) + rho(x_N, x~_N), N the last projection."""
    gap = norm_rows(traces.norm, traces.x - traces.partner)
    N = traces.last_projection_index
    bound = 2 * D / (1 - alpha) + gap[N]
    tail = gap[N + 1 :]
    sup = float(tail.max()) if tail.size else 0.0
    return BoundednessCheck(bool(sup <= bound + slack), N, sup, float(bound))


def observed_diameter(tmap: ContractiveSetMap, *traces: RunTrace) -> float:
    """sup of diam T(x_n) over every iterate of the given traces."""
    off = tmap.offsets
    if isinstance(off, Ball) and off.norm == tmap.metric.norm:
        pts = np.vstack([t.x for t in traces])
        return float(max(2.0 * off.radius_at(p) for p in pts))
    return float(max(tmap.set_map.diameter(p, tmap.metric.norm) for t in traces for p in t.x))
