import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svsa.dynamics import (
    Ball,
    DivergedError,
    HorizonTooShortError,
    InwardSetPair,
    MembershipError,
    NormBall,
    Offsets,
    SelectionStrategy,
    SetValuedMap,
    Sublevel,
    affine_map,
    ball_pair,
    build_inward_pair,
    euler_solve,
    inward_check,
    lyapunov_build,
    marchaud_report,
    select,
    unit_ball_sample,
)
from svsa.norms import NormSpec, norm_eval, norm_rows

EU1 = NormSpec.euclidean(1)
EU2 = NormSpec.euclidean(2)
MAX2 = NormSpec.unit_max(2)


def negative_identity(d=1, pert=None):
    return affine_map(-np.eye(d), np.zeros(d), pert)


# ------------------------------------------------------------------ selections


def test_select_singleton_returns_base():
    hmap = affine_map([[2.0, 0.0], [0.0, 3.0]], [1.0, 1.0])
    for kind in ("center", "uniform"):
        y = select(hmap, [1.0, 1.0], SelectionStrategy(kind), np.random.default_rng(0))
        assert np.array_equal(y, [3.0, 4.0])


def test_select_fixed_bias_on_boundary():
    hmap = negative_identity(2, Ball(0.1, MAX2))
    y = select(hmap, [1.0, 2.0], SelectionStrategy.fixed((0.1, 0.0)))
    assert np.array_equal(y, [-0.9, -2.0])


def test_fixed_bias_outside_raises():
    hmap = negative_identity(2, Ball(0.1, MAX2))
    with pytest.raises(MembershipError):
        select(hmap, [0.0, 0.0], SelectionStrategy.fixed((0.2, 0.0)))


def test_uniform_draws_stay_in_ball():
    hmap = negative_identity(2, Ball(0.1, MAX2))
    x = np.array([0.3, -0.7])
    offset = SelectionStrategy("uniform").prepare(hmap, 100_000, np.random.default_rng(1))
    fx = hmap.F(x)
    U = np.array([offset(k, x, fx) for k in range(100_000)])
    assert norm_rows(MAX2, U).max() <= 0.1
    assert all(hmap.contains(x, fx + u) for u in U[:200])


@pytest.mark.parametrize("norm", [EU2, NormSpec.weighted_max((1.0, 3.0)), NormSpec.weighted_p((2.0, 1.0), 3.0)])
def test_unit_ball_sample_inside(norm):
    pts = unit_ball_sample(norm, 2, np.random.default_rng(0), 5000)
    assert norm_rows(norm, pts).max() <= 1.0 + 1e-12
    assert abs(pts.mean(axis=0)).max() < 0.1


def test_callback_membership_is_enforced():
    hmap = negative_identity(1, Ball(0.1, EU1))
    good = SelectionStrategy("callback", callback=lambda x, fx, rng: fx + 0.05)
    assert select(hmap, [1.0], good)[0] == pytest.approx(-0.95)
    bad = SelectionStrategy("callback", callback=lambda x, fx, rng: fx + 0.5)
    with pytest.raises(MembershipError):
        select(hmap, [1.0], bad)


def test_offset_list_membership():
    pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    hmap = SetValuedMap(lambda x: np.zeros(2), 2, Offsets(pts))
    assert hmap.contains([0, 0], [0.0, 0.5])
    assert hmap.contains([0, 0], [1.0, 0.0])
    assert hmap.membership_distance([0, 0], [0.0, -1.0]) == pytest.approx(1.0, abs=1e-6)
    draws = SelectionStrategy("uniform").prepare(hmap, 50, np.random.default_rng(0))
    assert all(any(np.array_equal(draws(k, None, None), p) for p in pts) for k in range(50))


def test_unknown_strategy():
    with pytest.raises(ValueError):
        SelectionStrategy("random-walk")
    with pytest.raises(ValueError):
        SelectionStrategy("fixed-bias")


@given(arrays(float, 2, elements=st.floats(-10, 10)), st.integers(0, 10_000))
def test_every_selection_in_set(x, seed):
    hmap = affine_map([[0.5, 0.2], [0.1, -0.3]], [1.0, -1.0], Ball(0.25, NormSpec.weighted_p((1.0, 2.0), 2.0)))
    for kind in ("center", "uniform"):
        y = select(hmap, x, SelectionStrategy(kind), np.random.default_rng(seed))
        assert hmap.membership_distance(x, y) <= 1e-12


# ------------------------------------------------------------------ Marchaud


def test_marchaud_examples():
    grid = np.random.default_rng(0).uniform(-3, 3, size=(50, 2))
    zero_ball = SetValuedMap(lambda x: np.zeros(2), 2, Ball(1.0, EU2))
    assert marchaud_report(zero_ball, grid, 1.0).passed
    square = SetValuedMap(lambda x: x**2, 1)
    report = marchaud_report(square, [[1e3]], 5.0)
    assert not report.passed and len(report.violations) == 1
    unit = np.random.default_rng(1).uniform(-0.7, 0.7, size=(30, 2))
    assert marchaud_report(negative_identity(2), unit, 1.0).passed
    assert report.upper_semicontinuous.startswith("by construction")


def test_sup_norm_exact_for_boxes():
    hmap = SetValuedMap(lambda x: np.array([1.0, -2.0]), 2, Ball(0.5, NormSpec.weighted_max((1.0, 2.0))))
    corners = np.array([[1.5, -3.0], [0.5, -3.0], [1.5, -1.0], [0.5, -1.0]])
    assert hmap.sup_norm([0, 0]) == pytest.approx(np.linalg.norm(corners, axis=1).max())


def test_diameter_in_own_and_other_norm():
    hmap = SetValuedMap(lambda x: x, 2, Ball(0.05, MAX2))
    assert hmap.diameter([0, 0], MAX2) == pytest.approx(0.1)
    assert hmap.diameter([0, 0], EU2) == pytest.approx(0.1 * np.sqrt(2))


# ------------------------------------------------------------------ Euler


def test_euler_linear_decay():
    tr = euler_solve(negative_identity(), [1.0], 1e-3, 2.0)
    exact = np.exp(-tr.times)
    assert np.max(np.abs(tr.states[:, 0] - exact)) <= 1e-3
    assert tr.times[0] == 0
    assert np.allclose(tr.states[1:], tr.states[:-1] + tr.h * tr.selections)


def test_euler_constant_field_exact():
    hmap = SetValuedMap(lambda x: np.array([0.5, -1.0]), 2)
    tr = euler_solve(hmap, [1.0, 1.0], 0.25, 2.0)
    assert np.allclose(tr.states[-1], [2.0, -1.0], atol=1e-14)


def test_euler_tube_under_perturbation():
    hmap = negative_identity(1, Ball(0.1, EU1))
    for seed in range(5):
        tr = euler_solve(hmap, [2.0], 1e-2, 5.0, SelectionStrategy("uniform"), np.random.default_rng(seed))
        envelope = np.exp(-tr.times) * 2.0 + 0.1 * (1 - np.exp(-tr.times))
        assert np.all(np.abs(tr.states[:, 0]) <= envelope + 1e-2)


def test_euler_divergence():
    hmap = SetValuedMap(lambda x: x**3, 1)
    with pytest.raises(DivergedError) as info:
        euler_solve(hmap, [2.0], 0.1, 10.0)
    assert np.all(np.isfinite(info.value.last_state))


def test_euler_csv(tmp_path):
    tr = euler_solve(negative_identity(), [1.0], 0.5, 1.0)
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x_1" and len(lines) == 4


# ------------------------------------------------------------------ Lyapunov


@pytest.fixture(scope="module")
def lyap():
    return lyapunov_build(negative_identity(), [[0.0]], 1.0, 2.0, 10.0, 1e-3)


@pytest.fixture(scope="module")
def coarse_lyap():
    return lyapunov_build(negative_identity(), [[0.0]], 1.0, 2.0, 10.0, 1e-2)


def test_lyapunov_matches_abs(lyap):
    grid = np.linspace(-2, 2, 41)[:, None]
    assert np.max(np.abs(lyap.evaluate(grid) - np.abs(grid[:, 0]))) <= 1e-3
    assert lyap([0.0]) == 0.0


def test_lyapunov_bounded_by_dg(lyap):
    grid = np.linspace(-3, 3, 31)[:, None]
    assert np.all(lyap.evaluate(grid) <= 2.0 * np.abs(grid[:, 0]) + 1e-12)


def test_lyapunov_decreases_along_solutions(lyap):
    x0 = np.array([[-1.7], [-0.2], [0.4], [1.9]])
    v0 = lyap.evaluate(x0)
    for k in (1, 10, 100, 1000):
        assert np.all(lyap.evaluate(x0 * (1 - 1e-3) ** k) < v0)


def test_lyapunov_with_perturbation_positive_off_attractor():
    hmap = negative_identity(2, Ball(0.05, EU2))
    V = lyapunov_build(hmap, [[0.0, 0.0]], 1.0, 2.0, 15.0, 1e-2, tol=0.1)
    pts = np.array([[0.5, 0.0], [0.0, -1.0], [1.0, 1.0]])
    assert np.all(V.evaluate(pts) > 0)


def test_lyapunov_horizon_too_short():
    with pytest.raises(HorizonTooShortError):
        lyapunov_build(negative_identity(), [[0.0]], 1.0, 2.0, 0.5, 1e-2, probe=[[2.0]])


def test_lyapunov_parameter_validation():
    with pytest.raises(ValueError):
        lyapunov_build(negative_identity(), [[0.0]], 2.0, 1.0, 1.0, 1e-2)


def test_lyapunov_csv(lyap, tmp_path):
    lyap.to_csv(tmp_path / "v.csv", [[0.5], [1.0]])
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[0] == "x_1,V" and float(rows[2].split(",")[1]) == pytest.approx(1.0, abs=1e-3)


# ------------------------------------------------------------------ inward pairs


def test_build_inward_pair_abs(coarse_lyap):
    pair = build_inward_pair(coarse_lyap, 1.0, 2.0)
    assert pair.in_C([1.5]) and not pair.in_B([1.5])
    assert pair.in_B([0.9]) and not pair.in_C([2.1])
    bnd = pair.C.boundary(4)
    assert np.all(np.abs(coarse_lyap.evaluate(bnd) - 2.0) <= 1e-6)
    assert np.allclose(np.sort(bnd[:, 0]), [-2, -2, 2, 2], atol=1e-6)
    assert pair.check_nesting(8)
    with pytest.raises(ValueError):
        build_inward_pair(coarse_lyap, 2.0, 1.0)


def test_membership_consistency():
    pair = ball_pair([0.0, 0.0], 1.0, 2.0, EU2)
    pts = np.random.default_rng(0).uniform(-3, 3, size=(500, 2))
    for p in pts:
        if pair.in_B(p):
            assert pair.in_C(p)


def test_pair_requires_nesting():
    with pytest.raises(ValueError):
        ball_pair([0.0], 2.0, 1.0, EU1)


@pytest.mark.parametrize("radius", [0.5, 1.0, 2.0])
def test_inward_contracting_every_radius(radius):
    pair = ball_pair([0.0], radius / 2, radius, EU1)
    assert inward_check(pair, negative_identity(), 16, 1e-2, 3.0)


def test_inward_examples_1d():
    pair = ball_pair([0.0], 1.0, 2.0, EU1)
    assert inward_check(pair, negative_identity(1, Ball(0.1, EU1)), 16, 1e-2, 3.0)
    res = inward_check(pair, affine_map([[1.0]], [0.0]), 16, 1e-2, 3.0)
    assert not res and abs(abs(res.witness[0]) - 2.0) < 1e-9


def test_inward_on_sublevel_pair(coarse_lyap):
    pair = build_inward_pair(coarse_lyap, 1.0, 2.0)
    assert inward_check(pair, negative_identity(), 4, 1e-2, 1.0)


@pytest.mark.parametrize("norm", [EU2, NormSpec.weighted_max((1.0, 2.0)), NormSpec.weighted_p((1.0, 2.0), 3.0)])
def test_norm_ball_nearest_is_closest(norm):
    ball = NormBall((0.5, -0.5), 1.0, norm)
    rng = np.random.default_rng(3)
    for x in rng.uniform(-4, 4, size=(20, 2)):
        z = ball.nearest(x)
        assert norm_eval(norm, z - ball.c) <= 1.0 + 1e-9
        # no sampled ball point is closer than the returned one
        cands = ball.c + unit_ball_sample(norm, 2, rng, 2000)
        assert np.linalg.norm(x - z) <= np.linalg.norm(cands - x, axis=1).min() + 1e-6


def test_sublevel_nearest_stops_at_level(coarse_lyap):
    S = Sublevel(coarse_lyap, 1.0, (0.0,))
    z = S.nearest([3.0])
    assert z[0] == pytest.approx(1.0, abs=1e-6) and coarse_lyap(z) <= 1.0
    assert S.nearest([0.5])[0] == 0.5


def test_inward_set_pair_generic_types(coarse_lyap):
    mixed = InwardSetPair(NormBall((0.0,), 0.5, EU1), Sublevel(coarse_lyap, 2.0, (0.0,)))
    assert mixed.check_nesting(8)
