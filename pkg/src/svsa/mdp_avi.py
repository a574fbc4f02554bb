"""Tabular MDPs, the Bellman operator and stochastic approximate value iteration.

Costs are minimised. In ``ssp`` mode the discount is 1 and the terminal state's
value is pinned to zero, so (TJ)(i) = min_a c(i,a) + sum_{j != terminal} p(j|i,a) J(j).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .dynamics import Ball, SelectionStrategy, SetValuedMap, ball_pair
from .norms import NormSpec, norm_eval, norm_rows
from .saa import (
    ComparabilityReport,
    NoiseModel,
    RunTrace,
    StepSchedule,
    coupled_run,
    run_saa,
)

MODES = ("discounted", "ssp")
ROW_TOL = 1e-12


class ErrorBoundViolation(AssertionError):
    """An injected approximation error broke its declared bound."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_residual: float):
        super().__init__(message)
        self.last_residual = last_residual


@dataclass(frozen=True, eq=False)
class Mdp:
    """P[i, a, j] = p(j | i, a), cost[i, a] = c(i, a); missing actions have cost inf.

    ``raw`` keeps the transitions as given in the file so exact arithmetic can
    rebuild them without float rounding.
    """

    P: np.ndarray
    cost: np.ndarray
    mode: str = "discounted"
    gamma: float = 1.0
    terminal: int | None = None
    weights: tuple[float, ...] | None = None
    raw: tuple = field(default=(), repr=False)

    def __post_init__(self) -> None:
        P = np.asarray(self.P, dtype=float)
        cost = np.asarray(self.cost, dtype=float)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "cost", cost)
        S, A = cost.shape
        if P.shape != (S, A, S):
            raise ValueError("transition array must have shape (states, actions, states)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        avail = np.isfinite(cost)
        if not avail.any(axis=1).all():
            raise ValueError("every state needs at least one action")
        if np.any(P < 0):
            raise ValueError("negative transition probability")
        sums = P.sum(axis=2)
        if np.any(np.abs(sums[avail] - 1.0) > ROW_TOL):
            raise ValueError("transition rows must sum to 1")
        if self.mode == "discounted":
            if not 0 < self.gamma < 1:
                raise ValueError("discounted mode needs gamma in (0, 1)")
        else:
            object.__setattr__(self, "gamma", 1.0)
            t = self.terminal
            if t is None or not 0 <= t < S:
                raise ValueError("ssp mode needs a valid terminal state")
            if np.any(cost[t][avail[t]] != 0) or np.any(P[t][avail[t]][:, t] != 1):
                raise ValueError("terminal state must be absorbing with zero cost")
        if self.weights is not None and len(self.weights) != S:
            raise ValueError("weights must have one entry per state")

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    @property
    def n_actions(self) -> int:
        return self.cost.shape[1]

    @property
    def available(self) -> np.ndarray:
        return np.isfinite(self.cost)

    def weight_norm(self) -> NormSpec:
        """The weighted max-norm shipped with the MDP (unit weights when absent)."""
        return NormSpec.weighted_max(self.weights or (1.0,) * self.n_states)

    # ------------------------------------------------------------------ file format

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Mdp:
        S = int(data["n_states"])
        entries = data["actions"]
        A = 1 + max(int(e["action"]) for e in entries)
        P = np.zeros((S, A, S))
        cost = np.full((S, A), np.inf)
        raw = []
        for e in entries:
            i, a = int(e["state"]), int(e["action"])
            if np.isfinite(cost[i, a]):
                raise ValueError(f"duplicate entry for state {i} action {a}")
            cost[i, a] = float(e["cost"])
            for j, p in e["transitions"]:
                P[i, a, int(j)] += float(p)
            raw.append((i, a, e["cost"], tuple((int(j), p) for j, p in e["transitions"])))
        weights = data.get("weights")
        return cls(
            P,
            cost,
            data.get("mode", "discounted"),
            float(data.get("gamma", 1.0)),
            data.get("terminal"),
            None if weights is None else tuple(float(w) for w in weights),
            tuple(raw),
        )

    @classmethod
    def from_json(cls, path) -> Mdp:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"n_states": self.n_states, "mode": self.mode}
        if self.mode == "discounted":
            out["gamma"] = self.gamma
        else:
            out["terminal"] = self.terminal
        actions = []
        for i, a in zip(*np.nonzero(self.available)):
            trans = [[int(j), float(self.P[i, a, j])] for j in np.flatnonzero(self.P[i, a])]
            actions.append({"state": int(i), "action": int(a), "cost": float(self.cost[i, a]), "transitions": trans})
        out["actions"] = actions
        if self.weights is not None:
            out["weights"] = list(self.weights)
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


# ---------------------------------------------------------------------- Bellman operator


def q_values(mdp: Mdp, J: np.ndarray) -> np.ndarray:
    """Q[..., i, a] = c(i,a) + gamma sum_j p(j|i,a) J_j, with J_terminal read as 0 in ssp."""
    if mdp.terminal is not None:
        J = J.copy()
        J[..., mdp.terminal] = 0.0
    expect = mdp.P @ J if J.ndim == 1 else np.tensordot(J, mdp.P, axes=([-1], [2]))
    return mdp.cost + mdp.gamma * expect


def bellman(mdp: Mdp, J) -> np.ndarray:
    """(TJ)(i) = min_a Q(i, a); accepts one vector or a stack of vectors (last axis)."""
    J = np.asarray(J, dtype=float)
    if J.shape[-1] != mdp.n_states:
        raise ValueError(f"value vector has {J.shape[-1]} entries, MDP has {mdp.n_states} states")
    out = q_values(mdp, J).min(axis=-1)
    if mdp.terminal is not None:
        out[..., mdp.terminal] = 0.0
    return out


def greedy_policy(mdp: Mdp, J) -> np.ndarray:
    """argmin action per state; numpy's argmin keeps the lowest index on ties."""
    return np.argmin(q_values(mdp, np.asarray(J, dtype=float)), axis=-1)


def _to_fraction(v) -> Fraction:
    # decimal literal of the value, so 0.6 reads as 3/5
    return Fraction(str(v)) if not isinstance(v, Fraction) else v


def _exact_tables(mdp: Mdp):
    S = mdp.n_states
    if mdp.raw:
        table = {(i, a): (_to_fraction(c), [(j, _to_fraction(p)) for j, p in trans]) for i, a, c, trans in mdp.raw}
    else:
        table = {
            (int(i), int(a)): (
                _to_fraction(float(mdp.cost[i, a])),
                [(int(j), _to_fraction(float(mdp.P[i, a, j]))) for j in np.flatnonzero(mdp.P[i, a])],
            )
            for i, a in zip(*np.nonzero(mdp.available))
        }
    gamma = _to_fraction(mdp.gamma)
    return [[table[(i, a)] for a in range(mdp.n_actions) if (i, a) in table] for i in range(S)], gamma


def _bellman_exact(tables, gamma: Fraction, J: list[Fraction], terminal: int | None) -> list[Fraction]:
    out = []
    for i, acts in enumerate(tables):
        if i == terminal:
            out.append(Fraction(0))
            continue
        out.append(min(c + gamma * sum(p * J[j] for j, p in trans if j != terminal) for c, trans in acts))
    return out


@dataclass
class ViResult:
    J: np.ndarray
    residuals: np.ndarray
    sweeps: int
    exact_J: list[Fraction] | None = None
    exact_ratios: list[Fraction] | None = None

    @property
    def contraction_factors(self) -> np.ndarray:
        r = self.residuals
        return r[1:] / r[:-1]

    @property
    def residual(self) -> float:
        return float(self.residuals[-1])


VI_CAP = 10**6


def value_iteration(
    mdp: Mdp,
    tol: float = 1e-10,
    norm: NormSpec | None = None,
    arithmetic: str = "float",
    J0=None,
    max_sweeps: int = VI_CAP,
) -> ViResult:
    """Iterate J <- TJ until r_k = ||T J_k - J_k|| <= tol and return T J_k.

    ``residuals`` holds r_0..r_k; the returned vector is one sweep past the
    certified J_k, so its distance to J* is at most alpha r_k / (1 - alpha). ``arithmetic="exact"`` runs in rationals, reading
    every number from its decimal literal; residual ratios are then free of rounding.
    """
    norm = norm or NormSpec.unit_max(mdp.n_states)
    if norm.kind != "weighted-max":
        raise ValueError("value iteration residuals use a weighted max-norm")
    S = mdp.n_states
    J = np.zeros(S) if J0 is None else np.asarray(J0, dtype=float).copy()
    if arithmetic == "float":
        residuals = []
        for sweep in range(max_sweeps + 1):
            TJ = bellman(mdp, J)
            r = norm_eval(norm, TJ - J)
            residuals.append(r)
            if r <= tol:
                return ViResult(TJ, np.asarray(residuals), sweep)
            J = TJ
        raise ConvergenceError(f"value iteration hit the cap of {max_sweeps} sweeps", residuals[-1])
    if arithmetic != "exact":
        raise ValueError("arithmetic must be 'float' or 'exact'")
    tables, gamma = _exact_tables(mdp)
    w = [_to_fraction(v) for v in norm.weights]
    Jx = [_to_fraction(float(v)) for v in J]
    tol_x = _to_fraction(tol)
    residuals = []
    for sweep in range(max_sweeps + 1):
        TJ = _bellman_exact(tables, gamma, Jx, mdp.terminal)
        r = max(abs(t - j) / wi for t, j, wi in zip(TJ, Jx, w))
        residuals.append(r)
        Jx = TJ
        if r <= tol_x:
            break
    else:
        raise ConvergenceError(f"value iteration hit the cap of {max_sweeps} sweeps", float(residuals[-1]))
    # ratios are formed exactly, then rounded once
    res = np.array([float(r) for r in residuals])
    ratios = [residuals[k + 1] / residuals[k] for k in range(len(residuals) - 1) if residuals[k]]
    return ViResult(np.array([float(v) for v in Jx]), res, sweep, Jx, ratios)


def exact_vi(mdp: Mdp, tol: float = 1e-10, norm: NormSpec | None = None) -> np.ndarray:
    """J* to within residual ``tol``; raises ConvergenceError after 10^6 sweeps."""
    return value_iteration(mdp, tol, norm).J


def policy_value(mdp: Mdp, policy: Sequence[int]) -> np.ndarray:
    """Cost of a deterministic policy; inf on states where an ssp policy is improper."""
    S = mdp.n_states
    idx = np.arange(S)
    Pm = mdp.P[idx, policy]
    cm = mdp.cost[idx, policy]
    keep = np.ones(S, dtype=bool)
    if mdp.terminal is not None:
        keep[mdp.terminal] = False
    Q = mdp.gamma * Pm[np.ix_(keep, keep)]
    J = np.zeros(S)
    if np.max(np.abs(np.linalg.eigvals(Q))) >= 1 - 1e-12:
        J[keep] = np.inf
        return J
    J[keep] = np.linalg.solve(np.eye(keep.sum()) - Q, cm[keep])
    return J


def policy_enumeration(mdp: Mdp) -> np.ndarray:
    """J* as the componentwise minimum of all deterministic policy values."""
    choices = [np.flatnonzero(row) for row in mdp.available]
    best = np.full(mdp.n_states, np.inf)
    for policy in itertools.product(*choices):
        best = np.minimum(best, policy_value(mdp, np.array(policy)))
    if not np.all(np.isfinite(best)):
        raise ValueError("no proper policy reaches the terminal state from some state")
    return best


def contraction_modulus(mdp: Mdp, nu: NormSpec | None = None) -> float:
    """max_{i,a} gamma sum_{j != terminal} p(j|i,a) nu_j / nu_i, the Lipschitz constant of T in ||.||_nu."""
    nu = nu or mdp.weight_norm()
    w = nu.w
    P = mdp.P.copy()
    if mdp.terminal is not None:
        P[:, :, mdp.terminal] = 0.0
        P[mdp.terminal] = 0.0
    ratio = mdp.gamma * (P @ w) / w[:, None]
    return float(np.max(np.where(mdp.available, ratio, -np.inf)))


@dataclass
class ContractionCertificate:
    alpha_hat: float
    n_pairs: int
    witness: tuple[np.ndarray, np.ndarray] | None

    @property
    def passed(self) -> bool:
        return self.alpha_hat < 1.0

    def __bool__(self) -> bool:
        return self.passed


def contraction_certificate(
    mdp: Mdp, nu: NormSpec | None = None, n_pairs: int = 10_000, seed: int = 0
) -> ContractionCertificate:
    """Largest sampled ||TJ1 - TJ2||_nu / ||J1 - J2||_nu; pairs with J1 = J2 are skipped.

    Half the differences are random, half are multiples of nu plus a small
    perturbation, which is where the weighted max-norm ratio peaks.
    """
    nu = nu or mdp.weight_norm()
    if nu.kind != "weighted-max":
        raise ValueError("contraction certificate needs a weighted max-norm")
    rng = np.random.default_rng(seed)
    S = mdp.n_states
    scale = 1.0 + np.abs(mdp.cost[mdp.available]).max() / max(1e-12, 1.0 - min(mdp.gamma, 0.999))
    J1 = rng.normal(scale=scale, size=(n_pairs, S))
    diff = rng.normal(size=(n_pairs, S))
    half = n_pairs // 2
    diff[:half] = rng.choice([-1.0, 1.0], size=(half, 1)) * nu.w + 0.05 * diff[:half]
    J2 = J1 + diff * rng.uniform(0.01, scale, size=(n_pairs, 1))
    den = norm_rows(nu, J1 - J2)
    ok = den > 0
    num = norm_rows(nu, bellman(mdp, J1[ok]) - bellman(mdp, J2[ok]))
    ratios = num / den[ok]
    if ratios.size == 0:
        return ContractionCertificate(0.0, 0, None)
    k = int(np.argmax(ratios))
    return ContractionCertificate(float(ratios[k]), int(ok.sum()), (J1[ok][k], J2[ok][k]))


def perturbed_bellman(mdp: Mdp, eps: float, norm: NormSpec) -> SetValuedMap:
    """J -> TJ + {y : ||y||_norm <= eps}; a singleton map when eps = 0."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return SetValuedMap(lambda J: bellman(mdp, J), mdp.n_states, Ball(eps, norm) if eps > 0 else None, True)


# ---------------------------------------------------------------------- AVI

INJECTORS = ("fixed-bias", "uniform", "rounding")


def default_bias(norm: NormSpec, eps: float, d: int) -> np.ndarray:
    """A fixed error vector of norm exactly eps, pointing along the norm's weights."""
    direction = norm.w if norm.kind == "weighted-max" else np.ones(d)
    return eps * direction / norm_eval(norm, direction)


@dataclass(frozen=True)
class AviConfig:
    """Settings of one AVI run.

    ``error_norm`` bounds the injected errors; ``contraction_norm`` is the weighted
    max-norm nu in which T contracts (the MDP's weights when omitted). ``rounding``
    snaps TJ to a grid of spacing ``grid`` and shrinks the error onto the eps-ball.
    """

    eps: float = 0.1
    error_norm: NormSpec | None = None
    injector: str = "fixed-bias"
    bias: tuple[float, ...] | None = None
    grid: float = 0.25
    contraction_norm: NormSpec | None = None
    schedule: StepSchedule = field(default_factory=lambda: StepSchedule.harmonic(20.0, 20.0))
    noise: NoiseModel = field(default_factory=NoiseModel)
    n_iter: int = 200_000
    tail_fraction: float = 0.1
    seed: int = 0
    J0: tuple[float, ...] | None = None
    partner: bool = False
    partner_radii: tuple[float, float] = (2.0, 4.0)
    partner_J0: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.injector not in INJECTORS:
            raise ValueError(f"unknown error injector {self.injector!r}")
        if not 0 < self.tail_fraction <= 1:
            raise ValueError("tail_fraction must be in (0, 1]")
        if not 0 < self.partner_radii[0] < self.partner_radii[1]:
            raise ValueError("partner radii must satisfy 0 < r_b < r_c")


@dataclass
class AviResult:
    trace: RunTrace
    J_star: np.ndarray
    J_bar: np.ndarray
    residual: float
    distance: float
    residual_nu: float
    distance_nu: float
    eps: float
    eps_nu: float
    alpha: float
    error_norm: NormSpec
    nu: NormSpec
    partner: RunTrace | None = None
    gap: ComparabilityReport | None = None

    @property
    def stable(self) -> bool:
        return not self.trace.diverged

    @property
    def equilibrium_gap(self) -> float:
        """Distance of the residual to the eps-ball: 0 when J_bar is in {||TJ - J|| <= eps}."""
        return max(0.0, self.residual - self.eps)

    def summary(self) -> dict[str, Any]:
        out = {
            "residual": self.residual,
            "distance": self.distance,
            "residual_nu": self.residual_nu,
            "distance_nu": self.distance_nu,
            "eps": self.eps,
            "alpha": self.alpha,
            "diverged": self.trace.diverged,
        }
        if self.gap is not None:
            out.update({"N": self.gap.N, "sup_gap": self.gap.sup_gap})
        return out


def _strategy(cfg: AviConfig, mdp: Mdp, norm: NormSpec) -> SelectionStrategy:
    d = mdp.n_states
    if cfg.injector == "fixed-bias":
        bias = np.asarray(cfg.bias, float) if cfg.bias is not None else default_bias(norm, cfg.eps, d)
        return SelectionStrategy.fixed(bias)
    if cfg.injector == "uniform":
        return SelectionStrategy("uniform")
    eps, h = cfg.eps, cfg.grid

    def rounding(J, fJ, rng):
        TJ = fJ + J
        e = np.round(TJ / h) * h - TJ
        size = norm_eval(norm, e)
        if size > eps:
            e *= eps / size * (1 - 1e-15)
        return fJ + e

    return SelectionStrategy("callback", callback=rounding)


def _check_errors(U: np.ndarray, cfg: AviConfig, norm: NormSpec, nu: NormSpec) -> None:
    sizes = norm_rows(norm, U)
    bound = cfg.eps * (1 + 1e-12) + 1e-15
    if np.any(sizes > bound):
        k = int(np.argmax(sizes))
        raise ErrorBoundViolation(f"error {k} has norm {sizes[k]:.6g} > eps={cfg.eps}")
    if norm.kind == "weighted-p":
        bridge = cfg.eps / nu.w.min() * (1 + 1e-12) + 1e-15
        nu_sizes = norm_rows(nu, U)
        if np.any(nu_sizes > bridge):
            k = int(np.argmax(nu_sizes))
            raise ErrorBoundViolation(f"error {k} has nu-norm {nu_sizes[k]:.6g} > eps/nu_min={bridge:.6g}")


def _eps_in_nu(cfg: AviConfig, norm: NormSpec, nu: NormSpec) -> float:
    if norm == nu:
        return cfg.eps
    if norm.kind == "weighted-p":
        return cfg.eps / float(nu.w.min())
    # Euclidean or a different weighted max-norm: max_i |e_i| / nu_i <= ||e||_inf / nu_min
    if norm.kind == "euclidean":
        return cfg.eps / float(nu.w.min())
    return cfg.eps * float(np.max(norm.w / nu.w))


PARTNER_EPS_FLOOR = 0.05


def run_avi(mdp: Mdp, cfg: AviConfig, J_star: np.ndarray | None = None) -> AviResult:
    """J_{n+1} = J_n + a(n) (TJ_n - J_n + eps_n + M_{n+1}) with the configured error injector.

    Every injected error is checked against its bound after the run; a violation
    raises ErrorBoundViolation.
    """
    nu = cfg.contraction_norm or mdp.weight_norm()
    norm = cfg.error_norm or nu
    alpha = contraction_modulus(mdp, nu)
    if not alpha < 1:
        raise ValueError(f"T is not a contraction in the given weighted max-norm (modulus {alpha:.4g})")
    if J_star is None:
        J_star = exact_vi(mdp, 1e-12, nu)
    d = mdp.n_states
    hmap = SetValuedMap(
        lambda J: bellman(mdp, J) - J, d, Ball(cfg.eps, norm) if cfg.eps > 0 else None, True
    )
    strategy = _strategy(cfg, mdp, norm)
    J0 = np.zeros(d) if cfg.J0 is None else np.asarray(cfg.J0, float)
    eps_nu = _eps_in_nu(cfg, norm, nu)
    partner = gap = None
    if cfg.partner:
        rad = max(eps_nu, PARTNER_EPS_FLOOR) / (1 - alpha)
        pair = ball_pair(J_star, rad * cfg.partner_radii[0], rad * cfg.partner_radii[1], nu)
        trace, partner, gap = coupled_run(
            hmap, J0, cfg.schedule, cfg.noise, strategy, pair, cfg.n_iter, cfg.seed, nu,
            x0_partner=cfg.partner_J0,
        )
    else:
        trace = run_saa(hmap, J0, cfg.schedule, cfg.noise, strategy, cfg.n_iter, cfg.seed)
    _check_errors(trace.u, cfg, norm, nu)
    if partner is not None:
        _check_errors(partner.u, cfg, norm, nu)
    tail = max(1, int(round(cfg.tail_fraction * len(trace.x))))
    J_bar = trace.x[-tail:].mean(axis=0)
    res_vec = bellman(mdp, J_bar) - J_bar
    return AviResult(
        trace,
        J_star,
        J_bar,
        norm_eval(norm, res_vec),
        norm_eval(norm, J_bar - J_star),
        norm_eval(nu, res_vec),
        norm_eval(nu, J_bar - J_star),
        cfg.eps,
        eps_nu,
        alpha,
        norm,
        nu,
        partner,
        gap,
    )


@dataclass
class GapCheck:
    """Per-step and closed-form checks on a coupled pair of runs after index N."""

    passed: bool
    per_step_ok: bool
    closed_form_ok: bool
    N: int
    n_checked: int
    worst_margin: float
    branches: dict[str, int]

    def __bool__(self) -> bool:
        return self.passed


def gap_recursion_check(result: AviResult, alpha: float | None = None, eps: float | None = None,
                        slack: float = 1e-10) -> GapCheck:
    """g_{n+1} <= (1 - a(n)) g_n + a(n)(2 eps + alpha g_n) on every step without a
    projection, and g_n <= max(g_N, 2 eps/(1 - alpha)) for n >= N, g_n = ||J_n - J^_n||_nu.

    ``branches`` counts the steps n >= N on each side of the split
    2 eps <= (1 - alpha) g_n ("contracting") or not ("floor").
    """
    if result.partner is None or result.gap is None:
        raise ValueError("the AVI run has no projective partner")
    alpha = result.alpha if alpha is None else alpha
    eps = result.eps_nu if eps is None else eps
    return _gap_check(result.trace, result.partner, result.nu, alpha, 2 * eps, 2 * eps, slack)


def _gap_check(main: RunTrace, partner: RunTrace, norm: NormSpec, alpha: float, spread: float,
               floor_num: float, slack: float) -> GapCheck:
    n = min(len(main.x), len(partner.x))
    gap = norm_rows(norm, main.x[:n] - partner.x[:n])
    a = main.a[: n - 1]
    steps = np.arange(n - 1)
    free = ~np.any(partner.g[: n - 1] != 0, axis=1)
    rhs = (1 - a) * gap[:-1] + a * (spread + alpha * gap[:-1]) + slack
    step_margin = rhs - gap[1:]
    per_step_ok = bool(np.all(step_margin[free] >= 0))
    N = partner.last_projection_index
    floor = floor_num / (1 - alpha)
    bound = max(gap[N], floor) + slack
    closed_margin = bound - gap[N:]
    closed_ok = bool(np.all(closed_margin >= 0))
    after = steps >= N
    contracting = int(np.sum(floor_num <= (1 - alpha) * gap[:-1][after]))
    branches = {"contracting": contracting, "floor": int(after.sum()) - contracting}
    worst = float(min(step_margin[free].min(initial=np.inf), closed_margin.min()))
    return GapCheck(per_step_ok and closed_ok, per_step_ok, closed_ok, N, int(free.sum()), worst, branches)


@dataclass
class SweepRow:
    eps: float
    residual: float
    distance: float


def epsilon_sweep(mdp: Mdp, base: AviConfig, eps_list: Sequence[float]) -> list[SweepRow]:
    """One AVI run per eps (bias rebuilt for each eps); rows follow the given decreasing order."""
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    nu = base.contraction_norm or mdp.weight_norm()
    J_star = exact_vi(mdp, 1e-12, nu)
    rows = []
    for eps in eps_list:
        res = run_avi(mdp, replace(base, eps=eps, bias=None), J_star)
        rows.append(SweepRow(eps, res.residual, res.distance))
    return rows
