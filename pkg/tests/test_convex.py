import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfdual import convex as cx
from selfdual.errors import ConjugateError, ContractError


def builtins_1d():
    return {
        "quadratic": cx.Quadratic(0.5, 0.3),
        "norm_squared": cx.NormSquared(1, 2.0, 0.5),
        "zero": cx.Zero(1),
        "point": cx.PointIndicator([0.4]),
        "box": cx.BoxIndicator([-1.0], [2.0]),
        "ball": cx.BallIndicator([0.0], 1.5),
        "l1": cx.L1Norm(1, 1.0),
    }


def builtins_2d():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    return {
        "quadratic": cx.Quadratic(A, [0.1, -0.2], 0.3),
        "singular_quadratic": cx.Quadratic(np.diag([1.0, 0.0])),
        "norm_squared": cx.NormSquared(2, 0.7, [1.0, -1.0]),
        "zero": cx.Zero(2),
        "point": cx.PointIndicator([0.2, -0.1]),
        "box": cx.BoxIndicator([-1.0, 0.0], [1.0, 3.0]),
        "ball": cx.BallIndicator([0.5, 0.5], 1.0),
        "affine": cx.AffineIndicator([[1.0, 1.0]], [0.5]),
        "l1": cx.L1Norm(2, 0.5),
        "separable": cx.SeparableSum([cx.NormSquared(1), cx.PointIndicator([0.0])]),
    }


ALL = [(f"1d-{k}", f) for k, f in builtins_1d().items()] + \
      [(f"2d-{k}", f) for k, f in builtins_2d().items()]


def _grid_inf(fn, lo=-20.0, hi=20.0, step=1e-4):
    xs = np.arange(lo, hi + step / 2, step)
    return float(np.min(fn(xs)))


# -- spec examples ---------------------------------------------------------

def test_conjugate_of_half_square():
    assert cx.conjugate(cx.NormSquared(1), 3.0) == pytest.approx(4.5, abs=1e-14)


def test_point_indicator_conjugate_is_zero():
    f = cx.PointIndicator([0.0])
    for y in (-5.0, 0.0, 3.2):
        assert cx.conjugate(f, y) == 0.0


def test_initial_value_psi_conjugate():
    f = cx.Quadratic(0.5, -1.0)           # 1/4 x^2 - x
    # grid-sup oracle over [-20, 20] with step 1e-4
    xs = np.arange(-20.0, 20.0 + 5e-5, 1e-4)
    oracle = float(np.max(0.5 * xs - (0.25 * xs ** 2 - xs)))
    assert oracle == pytest.approx(2.25, abs=1e-8)
    assert cx.conjugate(f, 0.5) == pytest.approx(2.25, abs=1e-12)


def test_prox_examples():
    assert cx.prox(cx.NormSquared(1), 1.0, 2.0)[0] == pytest.approx(1.0)
    assert cx.prox(cx.PointIndicator([0.0]), 0.3, 7.0)[0] == 0.0
    # p = (x - lam b) / (1 + lam)
    assert cx.prox(cx.Quadratic(1.0, 1.0), 1.0, 3.0)[0] == pytest.approx(1.0)


def test_moreau_envelope_examples():
    assert cx.moreau_envelope(cx.PointIndicator([0.0]), 0.5, 1.0) == pytest.approx(1.0)
    f = cx.NormSquared(1)
    oracle = _grid_inf(lambda y: 0.5 * y ** 2 + (2.0 - y) ** 2 / 2.0)
    assert oracle == pytest.approx(1.0, abs=1e-8)
    assert cx.moreau_envelope(f, 1.0, 2.0) == pytest.approx(1.0, abs=1e-12)
    for lam in (0.1, 1.0, 10.0):
        assert cx.moreau_envelope(cx.L1Norm(1), lam, 0.0) == 0.0


def test_epsilon_perturb_examples():
    phi = cx.epsilon_perturb(cx.Static(cx.Zero(1)), 1.0)
    assert phi.value([0.0], [[3.0]])[0] == pytest.approx(4.5)
    assert phi.conjugate([0.0], [[3.0]])[0] == pytest.approx(4.5)
    # |x| + x^2/2 at y=3: grid-sup oracle
    xs = np.arange(-20.0, 20.0, 1e-4)
    oracle = float(np.max(3.0 * xs - np.abs(xs) - 0.5 * xs ** 2))
    assert oracle == pytest.approx(2.0, abs=1e-7)
    pl = cx.epsilon_perturb(cx.Static(cx.L1Norm(1)), 1.0)
    assert pl.conjugate([0.0], [[3.0]])[0] == pytest.approx(2.0, abs=1e-9)


def test_epsilon_perturb_sandwich():
    beta, eps = 1.0, 0.1
    base = cx.Static(cx.NormSquared(1, beta))
    g = cx.GrowthBounds(beta)
    pert = cx.epsilon_perturb(base, eps)
    rng = np.random.default_rng(3)
    U = rng.uniform(-10, 10, size=(100, 1))
    ts = rng.uniform(0, 1, 100)
    val = pert.conjugate(ts, U)
    sq = np.sum(U ** 2, axis=1)
    assert np.all(sq / (2 * (beta + eps)) - g.gamma_bar <= val + 1e-12)
    assert np.all(val <= sq / (2 * eps) + g.alpha_bar + 1e-12)


def test_hamiltonian_of_lagrangian_examples():
    phi = cx.Static(cx.NormSquared(1))
    assert cx.hamiltonian_of_lagrangian(phi, 0.0, [1.0], [2.0]) == pytest.approx(1.5)
    assert cx.hamiltonian_of_lagrangian(phi, 0.0, [0.0], [0.0]) == 0.0
    quarter = cx.Static(cx.NormSquared(1, 0.5))
    assert cx.hamiltonian_of_lagrangian(quarter, 0.0, [2.0], [-2.0]) == pytest.approx(0.0)


def test_hamiltonian_matches_numeric_sup():
    # H(x, y) = sup_p <y, p> - phi(x) - phi*(-p) on a grid of p
    f = cx.Quadratic(0.5, 0.0)       # 1/4 x^2, conjugate y^2
    ps = np.linspace(-30, 30, 600001)
    for x, y in ((2.0, -2.0), (1.0, 0.5), (-0.7, 1.3)):
        numeric = float(np.max(y * ps - 0.25 * x ** 2 - (-ps) ** 2))
        closed = cx.hamiltonian_of_lagrangian(cx.Static(f), 0.0, [x], [y])
        assert closed == pytest.approx(numeric, abs=1e-6)


def test_hamiltonian_infinite_phi_flag():
    phi = cx.Static(cx.BoxIndicator([-1.0], [1.0]))
    assert cx.hamiltonian_of_lagrangian(phi, 0.0, [3.0], [0.0]) == -math.inf


# -- extended reals and contracts -----------------------------------------

def test_unbounded_conjugate_is_explicit_inf():
    f = cx.L1Norm(1)
    assert cx.conjugate(f, 3.0) == math.inf
    assert cx.conjugate(cx.Zero(2), [1.0, 0.0]) == math.inf


def test_indicator_membership_tolerance():
    f = cx.BoxIndicator([0.0], [1.0])
    assert f([1.0 + 1e-13]) == 0.0
    assert f([1.0 + 1e-9]) == math.inf


def test_dimension_mismatch():
    with pytest.raises(ContractError):
        cx.NormSquared(2)([1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        cx.prox(cx.NormSquared(1), -1.0, 1.0)


def test_numeric_conjugate_failure_carries_bound():
    # sup_x -x - exp(x) is +inf (attained only as x -> -inf)
    f = cx.NumericConvex(lambda x: np.exp(min(x[0], 700.0)), 1)
    with pytest.raises(ConjugateError) as info:
        f.conjugate([-1.0])
    assert info.value.best_lower_bound > 10.0
    assert info.value.direction[0] < 0
    quartic = cx.NumericConvex(lambda x: float(np.sum(x ** 4)), 4)
    with pytest.raises(ContractError):
        quartic.conjugate(np.ones(4))


def test_numeric_conjugate_smooth():
    f = cx.NumericConvex(lambda x: math.cosh(x[0]), 1,
                         gradient=lambda x: np.sinh(np.clip(x, -700, 700)), strongly_convex=True)
    y = 0.7
    x = math.asinh(y)
    assert f.conjugate([y]) == pytest.approx(x * y - math.cosh(x), abs=1e-10)
    assert f.conjugate_gradient([y])[0] == pytest.approx(x, abs=1e-8)


def test_conjugate_pair_validation():
    good = cx.ConjugatePair(lambda x: 0.5 * x @ x, lambda y: 0.5 * y @ y, 1,
                            gradient=lambda x: x, conjugate_gradient=lambda y: y)
    assert good.validate() <= 1e-8
    bad = cx.ConjugatePair(lambda x: 0.5 * x @ x, lambda y: y @ y, 1,
                           gradient=lambda x: x, conjugate_gradient=lambda y: y / 2)
    with pytest.raises(ContractError):
        bad.validate()


# -- invariants over the catalog -------------------------------------------

@pytest.mark.parametrize("name,f", ALL, ids=[n for n, _ in ALL])
def test_fenchel_young_inequality(name, f):
    rng = np.random.default_rng(11)
    X = rng.uniform(-3, 3, size=(1000, f.dim))
    Y = rng.uniform(-3, 3, size=(1000, f.dim))
    gap = f.fenchel_young_gap(X, Y)
    assert np.all(gap >= -1e-10)


@pytest.mark.parametrize("name,f", ALL, ids=[n for n, _ in ALL])
def test_convexity_on_segments(name, f):
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(200, f.dim))
    Y = rng.uniform(-2, 2, size=(200, f.dim))
    th = rng.uniform(0, 1, size=(200, 1))
    lhs = f(th * X + (1 - th) * Y)
    with np.errstate(invalid="ignore"):
        rhs = th[:, 0] * f(X) + (1 - th[:, 0]) * f(Y)
    ok = np.isinf(rhs) | (lhs <= rhs + 1e-10)
    assert np.all(ok)


@pytest.mark.parametrize("name,f", ALL, ids=[n for n, _ in ALL])
def test_prox_optimality(name, f):
    rng = np.random.default_rng(7)
    for lam in (0.3, 1.0, 4.0):
        X = rng.uniform(-3, 3, size=(50, f.dim))
        P = f.prox(lam, X)
        gap = f.fenchel_young_gap(P, (X - P) / lam)
        assert np.all(np.abs(gap) <= 1e-8)


@pytest.mark.parametrize("name,f", ALL, ids=[n for n, _ in ALL])
def test_prox_nonexpansive(name, f):
    rng = np.random.default_rng(8)
    X = rng.uniform(-4, 4, size=(200, f.dim))
    Y = rng.uniform(-4, 4, size=(200, f.dim))
    d_prox = np.linalg.norm(f.prox(0.7, X) - f.prox(0.7, Y), axis=1)
    assert np.all(d_prox <= np.linalg.norm(X - Y, axis=1) + 1e-12)


@pytest.mark.parametrize("name,f", ALL, ids=[n for n, _ in ALL])
def test_moreau_monotone_in_lambda(name, f):
    rng = np.random.default_rng(9)
    X = rng.uniform(-3, 3, size=(30, f.dim))
    lams = [0.05, 0.1, 0.5, 1.0, 2.0, 8.0]
    vals = np.array([f.moreau_envelope(lam, X) for lam in lams])
    assert np.all(np.diff(vals, axis=0) <= 1e-12)
    fx = f(X)
    assert np.all(vals[0] <= fx + 1e-12)


@pytest.mark.parametrize("name,f", [(n, f) for n, f in ALL if f.dim == 1],
                         ids=[n for n, f in ALL if f.dim == 1])
def test_biconjugation_recovers_f(name, f):
    # numeric sup of <x, y> - f*(y) over a fine y grid, at points inside dom f
    ys = np.linspace(-60, 60, 240001)[:, None]
    fstar = f.conjugate(ys)
    fin = np.isfinite(fstar)
    for x in (-0.6, 0.0, 0.4, 1.2):
        fx = f([x])
        if not math.isfinite(fx):
            continue
        sup = float(np.max(x * ys[fin, 0] - fstar[fin]))
        assert sup == pytest.approx(fx, abs=1e-6) or (
            # indicators: biconjugate equals f only in the limit of the grid radius
            isinstance(f, (cx.PointIndicator, cx.BoxIndicator, cx.BallIndicator))
            and abs(sup - fx) < 1e-6 * 60)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.05, 5.0), b=st.floats(-3, 3), y=st.floats(-10, 10))
def test_quadratic_conjugate_closed_form(a, b, y):
    f = cx.Quadratic(a, b)
    assert f.conjugate([y]) == pytest.approx((y - b) ** 2 / (2 * a), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-50, 50), lam=st.floats(1e-3, 1e3))
def test_moreau_identity(x, lam):
    # x = prox_{lam f}(x) + lam prox_{f*/lam}(x/lam)
    f = cx.L1Norm(1, 0.8)
    g = f.conjugate_function()
    p = f.prox(lam, [x])[0]
    q = g.prox(1.0 / lam, [x / lam])[0]
    assert p + lam * q == pytest.approx(x, abs=1e-9 * max(1.0, abs(x)))


def test_perturb_keeps_closed_forms():
    q = cx.perturb(cx.Quadratic(1.0, 0.5), 0.1)
    assert isinstance(q, cx.Quadratic)
    z = cx.perturb(cx.Zero(2), 0.1)
    assert z.smooth and z.smooth_conjugate


def test_regularize_makes_both_sides_smooth():
    f = cx.regularize(cx.L1Norm(1), 0.01, 0.01)
    assert f.smooth and f.smooth_conjugate
    assert math.isfinite(f.conjugate([5.0]))


def test_time_dependent_potentials():
    F = cx.SinusoidForcing([1.0], [1.0])
    phi = cx.Forced(cx.NormSquared(1), F, 1.0)
    ts = np.array([0.25, 0.5])
    X = np.array([[1.0], [2.0]])
    assert phi.value(ts, X) == pytest.approx([0.5 + 1.0, 2.0 + 0.0], abs=1e-12)
    assert phi.gradient(ts, X)[:, 0] == pytest.approx([2.0, 2.0], abs=1e-12)
    T = cx.TableForcing([0.0, 1.0], [[0.0], [2.0]])
    assert T([0.25])[0, 0] == pytest.approx(0.5)
    with pytest.raises(ContractError):
        cx.TableForcing([0.0, 0.0], [[0.0], [1.0]])


def test_growth_check():
    phi = cx.Static(cx.NormSquared(1, 0.4))
    ok, _ = cx.check_growth(phi, cx.GrowthBounds(0.4), 1.0)
    assert ok
    ok, _ = cx.check_growth(phi, cx.GrowthBounds(0.2), 1.0)
    assert not ok
