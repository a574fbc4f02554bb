"""Experiment registry, config loading and output emission."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import dynamics as dyn
from . import fixed_point as fp
from . import mdp_avi as avi
from . import saa
from .norms import MetricSpec, NormSpec, norm_rows

DEFAULT_OUT = "svsa-out"
PLOT_ROWS = 2000


class ConfigError(ValueError):
    """The configuration does not match the registry schema."""


def data_path(name: str) -> Path:
    return Path(str(resources.files("svsa") / "data" / name))


def output_root(override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get("SVSA_OUT", DEFAULT_OUT))


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    seed: int | None = None
    params: dict[str, Any] = field(default_factory=dict)
    out_dir: str | None = None

    def canonical(self) -> dict[str, Any]:
        """Fully resolved config: registry defaults merged with the given params."""
        spec = REGISTRY[self.id]
        merged = dict(spec.defaults)
        merged.update(self.params)
        return {"id": self.id, "seed": self.seed, "params": merged}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.canonical(), sort_keys=True, indent=2)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    unknown = set(data) - {"id", "seed", "params", "out_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "id" not in data:
        raise ConfigError("config needs an experiment id")
    cfg = ExperimentConfig(data["id"], data.get("seed"), dict(data.get("params", {})), data.get("out_dir"))
    validate(cfg)
    return cfg


def _type_ok(default, value) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list)
    if isinstance(default, str):
        return isinstance(value, str)
    return True


def validate(cfg: ExperimentConfig) -> None:
    if cfg.id not in REGISTRY:
        raise ConfigError(f"unknown experiment id {cfg.id!r}; see `svsa list`")
    spec = REGISTRY[cfg.id]
    if spec.stochastic and not isinstance(cfg.seed, int):
        raise ConfigError(f"experiment {cfg.id!r} is stochastic and needs an integer seed")
    for key, value in cfg.params.items():
        if key not in spec.defaults:
            raise ConfigError(f"unknown parameter {key!r} for {cfg.id!r}")
        if not _type_ok(spec.defaults[key], value):
            raise ConfigError(f"parameter {key!r} of {cfg.id!r} has the wrong type")
    if "schedule" in spec.defaults:
        merged = {**spec.defaults, **cfg.params}
        try:
            verdict = saa.validate_schedule(_schedule(merged))
        except ValueError as exc:
            raise ConfigError(f"invalid step schedule: {exc}") from exc
        if verdict.status == "fail":
            raise ConfigError(f"step schedule rejected: {verdict.reason}")


# ---------------------------------------------------------------------- outputs


@dataclass
class Outcome:
    metrics: dict[str, Any]
    checks: dict[str, bool]
    trace: saa.RunTrace | None = None
    plot: tuple[list[str], list[list[float]]] | None = None


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _stride(n: int) -> int:
    return max(1, n // PLOT_ROWS)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


def run_experiment(cfg: ExperimentConfig, out_root=None) -> dict[str, Any]:
    """Run one experiment; writes trace.csv, plot.csv and summary.json under
    <root>/<id>/seed-<seed>/ and returns the summary."""
    validate(cfg)
    spec = REGISTRY[cfg.id]
    params = cfg.canonical()["params"]
    start = time.perf_counter()
    outcome = spec.run(params, cfg.seed if cfg.seed is not None else 0)
    wall = time.perf_counter() - start
    root = Path(cfg.out_dir) if cfg.out_dir else output_root(out_root)
    out = root / cfg.id / f"seed-{cfg.seed if cfg.seed is not None else 'none'}"
    out.mkdir(parents=True, exist_ok=True)
    if outcome.trace is not None:
        outcome.trace.to_csv(out / "trace.csv")
    if outcome.plot is not None:
        write_rows(out / "plot.csv", *outcome.plot)
    summary = {
        "id": cfg.id,
        "seed": cfg.seed,
        "config_hash": cfg.hash,
        "config": cfg.canonical(),
        "metrics": {k: _jsonable(v) for k, v in outcome.metrics.items()},
        "checks": {k: bool(v) for k, v in outcome.checks.items()},
        "passed": bool(all(outcome.checks.values())),
        "wall_time": wall,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    summary["out_dir"] = str(out)
    return summary


# ---------------------------------------------------------------------- experiments


def _schedule(p) -> saa.StepSchedule:
    kind = p["schedule"]
    if kind == "harmonic":
        return saa.StepSchedule.harmonic(p["a0"], p["shift"])
    if kind == "polynomial":
        return saa.StepSchedule.polynomial(p["q"], p["a0"], p["shift"])
    raise ConfigError(f"unknown schedule {kind!r}")


def _noise(p) -> saa.NoiseModel:
    if p["noise"] == "zero":
        return saa.NoiseModel()
    if p["noise"] == "bounded-iid":
        return saa.NoiseModel.bounded(p["noise_D"], p.get("noise_distribution", "uniform-ball"))
    if p["noise"] == "state-scaled-gaussian":
        return saa.NoiseModel.gaussian(p["noise_K"])
    raise ConfigError(f"unknown noise kind {p['noise']!r}")


def _norm(kind: str, weights: list[float], p_exp: float, d: int) -> NormSpec:
    if kind == "euclidean":
        return NormSpec.euclidean(d)
    w = weights or [1.0] * d
    if kind == "weighted-max":
        return NormSpec.weighted_max(w)
    if kind == "weighted-p":
        return NormSpec.weighted_p(w, p_exp)
    raise ConfigError(f"unknown norm kind {kind!r}")


STEP = {"schedule": "harmonic", "a0": 1.0, "shift": 1.0, "q": 1.0}
NOISE = {"noise": "bounded-iid", "noise_D": 0.2, "noise_distribution": "uniform-ball", "noise_K": 1.0}


def _saa_demo(p, seed) -> Outcome:
    d = len(p["x0"])
    hmap = dyn.affine_map(-np.eye(d), np.zeros(d), dyn.Ball(p["radius"], NormSpec.euclidean(d)))
    trace = saa.run_saa(hmap, p["x0"], _schedule(p), _noise(p), dyn.SelectionStrategy(p["selection"]),
                        p["n_iter"], seed)
    norms = np.linalg.norm(trace.x, axis=1)
    k = _stride(len(norms))
    tail = norms[-max(1, len(norms) // 10):]
    rows = [[n, trace.t[n], norms[n]] for n in range(0, len(norms), k)]
    return Outcome(
        {"final_norm": float(norms[-1]), "tail_max_norm": float(tail.max()), "diverged_at": trace.diverged_at},
        {"stable": not trace.diverged, "reaches_ball": float(tail.max()) <= p["radius"] + p["tolerance"]},
        trace,
        (["n", "t_n", "norm_x"], rows),
    )


def _projective_demo(p, seed) -> Outcome:
    d = len(p["x0"])
    sign = 1.0 if p["expanding"] else -1.0
    hmap = dyn.affine_map(sign * np.eye(d), np.zeros(d))
    pair = dyn.ball_pair(np.zeros(d), p["R_b"], p["R_c"], NormSpec.euclidean(d))
    noise = _noise(p)
    trace = saa.run_projective(hmap, p["x0"], _schedule(p), noise, dyn.SelectionStrategy(), pair, p["n_iter"], seed)
    contained = all(pair.in_closure_C(x) for x in trace.x)
    bound = noise.D if noise.kind == "bounded-iid" else 0.0
    sep = saa.separation_check(trace, pair, hmap, bound)
    gn = trace.g_norm()
    k = _stride(trace.n_iter)
    rows = [[n, trace.t[n], np.linalg.norm(trace.x[n]), gn[n]] for n in range(0, trace.n_iter, k)]
    return Outcome(
        {"n_projections": int(len(trace.projection_indices)), "delta": sep.delta, "d": sep.d, "D1": sep.D1,
         "min_separation": sep.min_separation},
        {"contained": contained, "separated": sep.passed},
        trace,
        (["n", "t_n", "norm_x", "g_norm"], rows),
    )


AVI_DEFAULTS = {
    "mdp": "mdp_discounted.json",
    "eps": 0.1,
    "injector": "fixed-bias",
    "error_norm": "contraction",
    "error_weights": [],
    "error_p": 2.0,
    "n_iter": 200_000,
    "tail_fraction": 0.1,
    "partner": False,
    "J0_offset": 0.0,
    "slack": 0.05,
    **STEP,
    "a0": 20.0,
    "shift": 20.0,
    **NOISE,
}


def _load_mdp(name: str) -> avi.Mdp:
    path = Path(name)
    return avi.Mdp.from_json(path if path.exists() else data_path(name))


def _avi_config(p, seed, mdp: avi.Mdp, J_star) -> avi.AviConfig:
    nu = mdp.weight_norm()
    if p["error_norm"] == "contraction":
        err = nu
    else:
        err = _norm(p["error_norm"], p["error_weights"], p["error_p"], mdp.n_states)
    J0 = tuple(J_star + p["J0_offset"]) if p["J0_offset"] else None
    return avi.AviConfig(
        eps=p["eps"], error_norm=err, injector=p["injector"], contraction_norm=nu, schedule=_schedule(p),
        noise=_noise(p), n_iter=p["n_iter"], tail_fraction=p["tail_fraction"], seed=seed, J0=J0,
        partner=p["partner"],
    )


def _avi(p, seed) -> Outcome:
    mdp = _load_mdp(p["mdp"])
    nu = mdp.weight_norm()
    J_star = avi.exact_vi(mdp, 1e-12, nu)
    cert = avi.contraction_certificate(mdp, nu, 10_000, seed)
    res = avi.run_avi(mdp, _avi_config(p, seed, mdp, J_star), J_star)
    metrics = res.summary()
    metrics["alpha_hat"] = cert.alpha_hat
    checks = {
        "certificate": cert.passed,
        "stable": res.stable,
        "residual": res.residual <= res.eps + p["slack"],
        "distance": res.distance_nu <= res.eps_nu / (1 - res.alpha) + p["slack"],
    }
    gap = None
    if res.gap is not None:
        gc = avi.gap_recursion_check(res)
        checks["gap_recursion"] = gc.passed
        metrics.update({"gap_branches": gc.branches, "gap_worst_margin": gc.worst_margin})
        gap = res.gap.gap
    X = res.trace.x
    k = _stride(len(X))
    idx = np.arange(0, len(X), k)
    resid = norm_rows(res.error_norm, avi.bellman(mdp, X[idx]) - X[idx])
    dist = norm_rows(res.nu, X[idx] - J_star)
    header = ["n", "residual", "distance"] + (["gap"] if gap is not None else [])
    rows = [[n, r, dd] + ([gap[n]] if gap is not None and n < len(gap) else []) for n, r, dd in zip(idx, resid, dist)]
    return Outcome(metrics, checks, res.trace, (header, rows))


def _epsilon_sweep(p, seed) -> Outcome:
    mdp = _load_mdp(p["mdp"])
    base = _avi_config({**p, "eps": p["eps_list"][0]}, seed, mdp, avi.exact_vi(mdp, 1e-12, mdp.weight_norm()))
    rows = avi.epsilon_sweep(mdp, base, p["eps_list"])
    dist = [r.distance for r in rows]
    mono = all(b <= a + p["monotone_slack"] for a, b in zip(dist, dist[1:]))
    resid_ok = all(r.residual <= r.eps + p["slack"] for r in rows)
    return Outcome(
        {"table": [[r.eps, r.residual, r.distance] for r in rows]},
        {"distance_non_increasing": mono, "residual_rows": resid_ok},
        None,
        (["eps", "residual", "distance"], [[r.eps, r.residual, r.distance] for r in rows]),
    )


def _gap_plot(trace, partner, norm):
    gap = norm_rows(norm, trace.x - partner.x[: len(trace.x)])
    k = _stride(len(gap))
    return gap, [[n, gap[n]] for n in range(0, len(gap), k)]


def _fixed_point(p, seed) -> Outcome:
    name = p["map"]
    path = Path(name) if Path(name).exists() else data_path(name)
    tmap = fp.ContractiveSetMap.from_json(path)
    cert = fp.certify_map(tmap, 500, seed=seed)
    start = np.asarray(p["x0"], float)
    res = fp.run_fixed_point(tmap, start, _schedule(p), _noise(p), dyn.SelectionStrategy(p["selection"]),
                             p["n_iter"], seed)
    gc = fp.fp_gap_bound_check(res, tmap.alpha, tmap.D)
    gap, rows = _gap_plot(res.trace, res.partner, tmap.metric.norm)
    return Outcome(
        {**res.summary(), "contraction_ratio": cert.contraction_ratio, "gap_branches": gc.branches},
        {"certificate": cert.passed, "residual": res.residual <= p["residual_tol"], "gap_bound": gc.passed,
         "stable": not res.trace.diverged},
        res.trace,
        (["n", "gap"], rows),
    )


def _note_lemma(p, seed) -> Outcome:
    d = len(p["x0"])
    alpha, D = p["alpha"], p["D"]
    metric = MetricSpec.from_norm(NormSpec.unit_max(d))
    stage = fp.StageMap(lambda n, x, xi: alpha * x + xi, d, alpha, D, metric)
    pair = dyn.ball_pair(np.zeros(d), p["R_b"], p["R_c"], metric.norm)
    tr = fp.run_stage_pair(stage, p["x0"], p["n_iter"], pair, _noise(p), seed)
    chk = fp.generic_boundedness_check(tr, alpha, D)
    gap = norm_rows(metric.norm, tr.x - tr.partner)
    k = _stride(len(gap))
    return Outcome(
        {"N": chk.N, "sup_gap": chk.sup_gap, "bound": chk.bound},
        {"bounded": chk.passed},
        None,
        (["n", "gap"], [[n, gap[n]] for n in range(0, len(gap), k)]),
    )


def _lyapunov(p, seed) -> Outcome:
    d = 1
    hmap = dyn.affine_map(-np.eye(d), np.zeros(d))
    V = dyn.lyapunov_build(hmap, np.zeros((1, d)), p["c"], p["d_g"], p["T_h"], p["h"])
    grid = np.linspace(-p["extent"], p["extent"], p["n_grid"])[:, None]
    vals = V.evaluate(grid)
    err = float(np.max(np.abs(vals - np.abs(grid[:, 0]))))
    off = grid[np.abs(grid[:, 0]) > 0]
    decrease = True
    for t in p["decrease_times"]:
        later = V.evaluate(off * np.exp(-t))
        decrease &= bool(np.all(V.evaluate(off) > later))
    return Outcome(
        {"max_abs_error": err},
        {"matches_norm": err <= p["tolerance"], "decreasing": decrease},
        None,
        (["x", "V"], [[g, v] for g, v in zip(grid[:, 0], vals)]),
    )


def _inward(p, seed) -> Outcome:
    d = 2
    eu = NormSpec.euclidean(d)
    pair = dyn.ball_pair(np.zeros(d), p["R_b"], p["R_c"], eu)
    contracting = dyn.affine_map(-np.eye(d), np.zeros(d), dyn.Ball(p["radius"], eu))
    expanding = dyn.affine_map(np.eye(d), np.zeros(d))
    pos = dyn.inward_check(pair, contracting, p["n_boundary"], p["h"], p["T_h"])
    neg = dyn.inward_check(pair, expanding, p["n_boundary"], p["h"], p["T_h"])
    starts = pair.C.boundary(p["n_boundary"])
    return Outcome(
        {"worst_excess": pos.worst_excess, "negative_witness": None if neg.witness is None else neg.witness.tolist()},
        {"inward": pos.passed, "negative_control_rejected": (not neg.passed) and neg.witness is not None},
        None,
        (["x_1", "x_2"], starts.tolist()),
    )


def _noise_window(p, seed) -> Outcome:
    k_max = p["k_max"]
    s = _schedule(p)
    # enough steps for every window started at k <= k_max to close
    n = int(k_max * np.exp(p["T"] / p["a0"]) * 1.05 + p["shift"] + 100)
    a = s.array(n)
    M = saa.noise_draws(_noise(p), n, p["dim"], seed)
    chk = saa.window_sums(a, M, p["T"], p["k_min"], k_max)
    return Outcome(
        {"max_window_sum": chk.max_sum, "k_argmax": chk.k_argmax, "n_windows": chk.n_windows},
        {"window_small": chk.max_sum <= p["threshold"] and not chk.partial},
        None,
        None,
    )


@dataclass(frozen=True)
class ExperimentSpec:
    run: Callable[[dict[str, Any], int], Outcome]
    defaults: dict[str, Any]
    stochastic: bool
    about: str


REGISTRY: dict[str, ExperimentSpec] = {
    "saa-demo": ExperimentSpec(
        _saa_demo,
        {"x0": [3.0, -2.0], "radius": 0.1, "selection": "uniform", "n_iter": 20_000, "tolerance": 0.05,
         **STEP, **NOISE},
        True,
        "iterate for x' in -x + ball(r) with bounded noise",
    ),
    "projective-demo": ExperimentSpec(
        _projective_demo,
        {"x0": [0.5, 0.0], "R_b": 1.0, "R_c": 2.0, "expanding": True, "n_iter": 20_000, **STEP, **NOISE},
        True,
        "projective scheme on an expanding field: containment and event separation",
    ),
    "avi-discounted": ExperimentSpec(_avi, dict(AVI_DEFAULTS), True, "AVI on the shipped discounted MDP"),
    "avi-ssp": ExperimentSpec(_avi, {**AVI_DEFAULTS, "mdp": "mdp_ssp.json"}, True,
                              "AVI on the shipped stochastic shortest path MDP"),
    "avi-pnorm": ExperimentSpec(
        _avi, {**AVI_DEFAULTS, "error_norm": "weighted-p", "error_weights": [1.0, 1.0, 1.0], "error_p": 2.0},
        True, "AVI with errors bounded in a weighted p-norm",
    ),
    "epsilon-sweep": ExperimentSpec(
        _epsilon_sweep, {**AVI_DEFAULTS, "n_iter": 100_000, "eps_list": [0.5, 0.1, 0.02], "monotone_slack": 0.02},
        True, "AVI limit neighbourhood as the error bound shrinks",
    ),
    "fixed-point": ExperimentSpec(
        _fixed_point,
        {"map": "fp_affine_ball.json", "x0": [8.0, -6.0], "selection": "uniform", "n_iter": 100_000,
         "residual_tol": 0.05, **STEP, "a0": 20.0, "shift": 20.0, **NOISE},
        True, "fixed point of an affine-plus-ball contraction, coupled with its projective partner",
    ),
    "note-lemma": ExperimentSpec(
        _note_lemma,
        {"x0": [5.0, 5.0], "alpha": 0.5, "D": 0.1, "R_b": 0.5, "R_c": 1.0, "n_iter": 100_000, **NOISE},
        True, "boundedness of a generic contractive stage-map iteration against its projected partner",
    ),
    "lyapunov-build": ExperimentSpec(
        _lyapunov,
        {"c": 1.0, "d_g": 2.0, "T_h": 10.0, "h": 1e-3, "extent": 2.0, "n_grid": 100, "tolerance": 1e-3,
         "decrease_times": [0.1, 0.5, 1.0, 3.0]},
        False, "trajectory-maximum Lyapunov function for x' = -x",
    ),
    "inward-check": ExperimentSpec(
        _inward,
        {"radius": 0.1, "R_b": 1.0, "R_c": 2.0, "n_boundary": 64, "h": 1e-2, "T_h": 5.0},
        False, "inward-directing check with a negative control",
    ),
    "noise-window": ExperimentSpec(
        _noise_window,
        {"T": 1.0, "k_min": 10_000, "k_max": 100_000, "dim": 2, "threshold": 0.05, **STEP, **NOISE},
        True, "noise window sums over [k, m_T(k)]",
    ),
}
