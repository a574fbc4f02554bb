import itertools
import json
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svsa.dynamics import MembershipError
from svsa.experiments import data_path
from svsa.mdp_avi import (
    AviConfig,
    ConvergenceError,
    ErrorBoundViolation,
    Mdp,
    bellman,
    contraction_certificate,
    contraction_modulus,
    epsilon_sweep,
    exact_vi,
    gap_recursion_check,
    greedy_policy,
    perturbed_bellman,
    policy_enumeration,
    policy_value,
    run_avi,
    value_iteration,
)
from svsa.norms import NormSpec, hausdorff, norm_eval, sample_ball
from svsa.saa import NoiseModel, StepSchedule


@pytest.fixture(scope="module")
def disc():
    return Mdp.from_json(data_path("mdp_discounted.json"))


@pytest.fixture(scope="module")
def ssp():
    return Mdp.from_json(data_path("mdp_ssp.json"))


def one_state(cost=1.0, gamma=0.5):
    return Mdp(np.ones((1, 1, 1)), [[cost]], "discounted", gamma)


def random_mdp(seed, S=4, A=3, gamma=0.85):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    return Mdp(P, rng.uniform(0, 5, size=(S, A)), "discounted", gamma)


def brute_bellman(mdp, J):
    out = []
    for i in range(mdp.n_states):
        vals = []
        for a in range(mdp.n_actions):
            if not np.isfinite(mdp.cost[i, a]):
                continue
            Jt = [0.0 if j == mdp.terminal else J[j] for j in range(mdp.n_states)]
            vals.append(mdp.cost[i, a] + mdp.gamma * sum(mdp.P[i, a, j] * Jt[j] for j in range(mdp.n_states)))
        out.append(0.0 if i == mdp.terminal else min(vals))
    return np.array(out)


vectors = arrays(np.float64, 4, elements=st.floats(-50, 50))


# ------------------------------------------------------------------ operator


def test_one_state_examples():
    m = one_state()
    assert bellman(m, [0.0]) == pytest.approx([1.0])
    assert bellman(m, [2.0]) == pytest.approx([2.0])
    assert exact_vi(m, 1e-12) == pytest.approx([2.0], abs=1e-11)


@pytest.mark.parametrize("seed", range(5))
def test_bellman_matches_enumeration(seed, ssp):
    rng = np.random.default_rng(seed)
    m = random_mdp(seed)
    J = rng.normal(size=4) * 10
    assert np.allclose(bellman(m, J), brute_bellman(m, J), rtol=0, atol=1e-12)
    Js = rng.normal(size=4) * 10
    assert np.allclose(bellman(ssp, Js), brute_bellman(ssp, Js), rtol=0, atol=1e-12)


def test_bellman_batches(disc):
    J = np.random.default_rng(0).normal(size=(7, 3))
    assert np.allclose(bellman(disc, J), np.stack([bellman(disc, j) for j in J]), rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        bellman(disc, np.zeros(4))


def test_ssp_terminal_pinned(ssp):
    J = np.array([1.0, 2.0, 3.0, 99.0])
    TJ = bellman(ssp, J)
    assert TJ[3] == 0.0
    J0 = J.copy()
    J0[3] = 0.0
    assert np.array_equal(TJ, bellman(ssp, J0))


@settings(max_examples=40)
@given(vectors, vectors, st.integers(0, 20))
def test_monotone_and_gamma_contraction(J1, J2, seed):
    m = random_mdp(seed)
    lo = np.minimum(J1, J2)
    assert np.all(bellman(m, lo) <= bellman(m, J1) + 1e-12)
    lhs = np.abs(bellman(m, J1) - bellman(m, J2)).max()
    assert lhs <= m.gamma * np.abs(J1 - J2).max() + 1e-9


@given(vectors, vectors)
def test_ssp_weighted_contraction(J1, J2):
    ssp = Mdp.from_json(data_path("mdp_ssp.json"))
    nu = ssp.weight_norm()
    alpha = contraction_modulus(ssp)
    assert norm_eval(nu, bellman(ssp, J1) - bellman(ssp, J2)) <= alpha * norm_eval(nu, J1 - J2) + 1e-9


def test_greedy_policy_ties_lowest_index():
    m = Mdp(np.ones((1, 2, 1)), [[1.0, 1.0]], "discounted", 0.5)
    assert list(greedy_policy(m, [0.0])) == [0]


# ------------------------------------------------------------------ value iteration


def test_vi_matches_policy_enumeration(disc, ssp):
    for m in (disc, ssp):
        assert np.abs(exact_vi(m, 1e-12, m.weight_norm()) - policy_enumeration(m)).max() <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_vi_random_mdps(seed):
    m = random_mdp(seed)
    J = exact_vi(m, 1e-11)
    assert np.abs(J - policy_enumeration(m)).max() <= 1e-9
    assert np.abs(bellman(m, J) - J).max() <= 1e-10


def test_exact_arithmetic_ratios(disc):
    res = value_iteration(disc, 1e-10, arithmetic="exact")
    assert all(isinstance(r, Fraction) for r in res.exact_ratios)
    assert max(res.exact_ratios) <= Fraction(9, 10)
    assert np.abs(res.J - policy_enumeration(disc)).max() <= 1e-8


def test_vi_cap_raises():
    with pytest.raises(ConvergenceError) as info:
        value_iteration(one_state(gamma=0.99), 1e-12, max_sweeps=5)
    assert info.value.last_residual > 0


def test_vi_rejects_p_norm(disc):
    with pytest.raises(ValueError):
        value_iteration(disc, norm=NormSpec.euclidean(3))
    with pytest.raises(ValueError):
        value_iteration(disc, arithmetic="decimal")


def test_improper_policy_has_infinite_cost(ssp):
    loops = [a for a in itertools.product(*[np.flatnonzero(r) for r in ssp.available])]
    values = [policy_value(ssp, np.array(p)) for p in loops]
    assert all(v[3] == 0 for v in values)


# ------------------------------------------------------------------ certificate


def test_certificate_discounted(disc):
    cert = contraction_certificate(disc, NormSpec.unit_max(3), 10_000)
    assert cert.passed and cert.alpha_hat <= disc.gamma + 1e-12
    assert cert.n_pairs == 10_000


def test_certificate_ssp(ssp):
    cert = contraction_certificate(ssp)
    assert cert.passed
    assert cert.alpha_hat <= contraction_modulus(ssp) + 1e-12


def test_certificate_unit_weights_fail_for_ssp(ssp):
    assert contraction_modulus(ssp, NormSpec.unit_max(4)) >= 1.0


def test_certificate_needs_max_norm(disc):
    with pytest.raises(ValueError):
        contraction_certificate(disc, NormSpec.euclidean(3))


# ------------------------------------------------------------------ perturbed operator


def test_perturbed_bellman_singleton(disc):
    Tm = perturbed_bellman(disc, 0.0, NormSpec.unit_max(3))
    J = np.array([1.0, 2.0, 3.0])
    assert Tm.perturbation is None and np.array_equal(Tm.F(J), bellman(disc, J))


def test_perturbed_bellman_hausdorff(disc, rng):
    nu = NormSpec.unit_max(3)
    eps = 0.2
    Tm = perturbed_bellman(disc, eps, nu)
    for _ in range(5):
        J1, J2 = rng.normal(size=(2, 3)) * 5
        S1, _ = sample_ball(Tm.F(J1), eps, nu, 9)
        S2, _ = sample_ball(Tm.F(J2), eps, nu, 9)
        H = hausdorff(S1, S2, nu)
        bound = disc.gamma * norm_eval(nu, J1 - J2)
        assert norm_eval(nu, Tm.F(J1) - Tm.F(J2)) <= bound + 1e-12
        # selections y_i = TJ_i + e_i stay within alpha ||J1 - J2|| + 2 eps of each other
        assert H <= bound + 2 * eps + 1e-12
    with pytest.raises(ValueError):
        perturbed_bellman(disc, -0.1, nu)


# ------------------------------------------------------------------ AVI runs


def test_avi_exact_no_noise_converges(disc):
    cfg = AviConfig(eps=0.0, contraction_norm=NormSpec.unit_max(3), n_iter=20_000)
    res = run_avi(disc, cfg)
    assert res.distance <= 1e-3 and res.stable
    assert res.trace.M.max() == 0


def test_avi_fixed_bias_stays_within_eps(disc):
    cfg = AviConfig(eps=0.1, contraction_norm=NormSpec.unit_max(3), n_iter=20_000)
    res = run_avi(disc, cfg)
    assert np.all(np.abs(res.trace.u).max(axis=1) <= 0.1 + 1e-12)
    assert res.residual <= 0.1 + 1e-3
    assert res.distance <= 0.1 / (1 - 0.9) + 1e-3


@pytest.mark.parametrize("injector", ["uniform", "rounding"])
def test_avi_injectors_respect_bound(disc, injector):
    cfg = AviConfig(eps=0.1, injector=injector, contraction_norm=NormSpec.unit_max(3), n_iter=5000,
                    noise=NoiseModel.bounded(0.2), seed=3)
    res = run_avi(disc, cfg)
    assert np.abs(res.trace.u).max() <= 0.1 * (1 + 1e-12)


def test_avi_oversized_bias_raises(disc):
    cfg = AviConfig(eps=0.1, bias=(0.2, 0.0, 0.0), contraction_norm=NormSpec.unit_max(3), n_iter=100)
    with pytest.raises((ErrorBoundViolation, MembershipError)):
        run_avi(disc, cfg)


def test_avi_p_norm_bridge_violation(disc):
    pn = NormSpec.weighted_p((1.0, 1.0, 1.0), 2)
    nu = NormSpec.weighted_max((2.0, 2.0, 2.0))
    # 0.1 in the 2-norm along one axis is 0.05 in nu, within eps/nu_min; a legal error
    ok = AviConfig(eps=0.1, error_norm=pn, bias=(0.1, 0.0, 0.0), contraction_norm=nu, n_iter=100)
    run_avi(disc, ok)
    bad = replace(ok, contraction_norm=NormSpec.weighted_max((0.5, 1.0, 1.0)))
    with pytest.raises(ValueError):
        run_avi(disc, bad)


def test_avi_rejects_non_contraction(ssp):
    with pytest.raises(ValueError):
        run_avi(ssp, AviConfig(contraction_norm=NormSpec.unit_max(4), n_iter=10))


def test_avi_partner_gap_checks(disc):
    cfg = AviConfig(eps=0.1, contraction_norm=NormSpec.unit_max(3), n_iter=20_000, partner=True,
                    J0=tuple(exact_vi(disc, 1e-12) + 20), noise=NoiseModel.bounded(0.1), seed=1)
    res = run_avi(disc, cfg)
    chk = gap_recursion_check(res)
    assert chk.passed and chk.per_step_ok and chk.closed_form_ok
    assert sum(chk.branches.values()) == len(res.trace.a) - chk.N
    # a bound that is too tight must be rejected
    assert not gap_recursion_check(res, alpha=0.0, eps=0.0).passed


def test_gap_check_requires_partner(disc):
    res = run_avi(disc, AviConfig(contraction_norm=NormSpec.unit_max(3), n_iter=100))
    with pytest.raises(ValueError):
        gap_recursion_check(res)


def test_avi_config_validation():
    with pytest.raises(ValueError):
        AviConfig(eps=-1.0)
    with pytest.raises(ValueError):
        AviConfig(injector="gaussian")
    with pytest.raises(ValueError):
        AviConfig(partner_radii=(3.0, 2.0))


def test_epsilon_sweep(disc):
    base = AviConfig(contraction_norm=NormSpec.unit_max(3), n_iter=10_000)
    rows = epsilon_sweep(disc, base, [0.2, 0.1, 0.0])
    dist = [r.distance for r in rows]
    assert dist[0] > dist[1] > dist[2]
    assert rows[2].distance <= 1e-3
    with pytest.raises(ValueError):
        epsilon_sweep(disc, base, [0.1, 0.2])


def test_avi_deterministic(disc):
    cfg = AviConfig(contraction_norm=NormSpec.unit_max(3), n_iter=2000, noise=NoiseModel.bounded(0.3), seed=4)
    a, b = run_avi(disc, cfg), run_avi(disc, cfg)
    assert np.array_equal(a.trace.x, b.trace.x)
    assert a.summary() == b.summary()


# ------------------------------------------------------------------ file format


def test_json_round_trip(tmp_path, disc, ssp):
    for m in (disc, ssp):
        m.to_json(tmp_path / "m.json")
        back = Mdp.from_json(tmp_path / "m.json")
        assert np.array_equal(back.P, m.P) and np.array_equal(back.cost, m.cost)
        assert back.mode == m.mode and back.terminal == m.terminal and back.weights == m.weights


def _doc(**kw):
    doc = {"n_states": 2, "gamma": 0.9, "actions": [
        {"state": 0, "action": 0, "cost": 1.0, "transitions": [[1, 1.0]]},
        {"state": 1, "action": 0, "cost": 0.0, "transitions": [[1, 1.0]]},
    ]}
    doc.update(kw)
    return doc


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["actions"][0].update(transitions=[[1, 0.7]]),
        lambda d: d["actions"][0].update(transitions=[[1, 1.2], [0, -0.2]]),
        lambda d: d["actions"].pop(),
        lambda d: d["actions"].append(dict(d["actions"][0])),
        lambda d: d.update(gamma=1.0),
        lambda d: d.update(mode="ssp", terminal=0),
        lambda d: d.update(mode="ssp", terminal=None),
        lambda d: d.update(mode="average"),
        lambda d: d.update(weights=[1.0]),
    ],
)
def test_invalid_mdps(mutate):
    doc = json.loads(json.dumps(_doc()))
    mutate(doc)
    with pytest.raises(ValueError):
        Mdp.from_dict(doc)


def test_valid_ssp_doc():
    m = Mdp.from_dict(_doc(mode="ssp", terminal=1))
    assert m.gamma == 1.0
    assert exact_vi(m, 1e-12) == pytest.approx([1.0, 0.0])


def test_error_check_rejects_large_errors():
    from svsa.mdp_avi import _check_errors

    nu = NormSpec.unit_max(2)
    cfg = AviConfig(eps=0.1)
    _check_errors(np.array([[0.1, -0.1]]), cfg, nu, nu)
    with pytest.raises(ErrorBoundViolation):
        _check_errors(np.array([[0.1, 0.2]]), cfg, nu, nu)
