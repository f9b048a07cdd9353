import math
import time

import numpy as np
import pytest

from selfdual import convex as cx
from selfdual.errors import ContractError
from selfdual.lagrangians import FlowKind, Problem, evaluate, make_boundary
from selfdual.paths import Path, PathGrid
from selfdual.solver import (Method, Schedule, SolverOptions, certify, choose_method,
                             functional_gradient, minimize, resonance_guard)


def ivp(x0=1.0, N=200):
    return Problem(FlowKind.GRADIENT_FLOW, cx.NormSquared(1), make_boundary("initial_value",
                   x0=[x0]), PathGrid(1.0, N, 1))


def hamiltonian(kind, bc_kind, omega=0.4, forcing=(0.3, -0.2), N=400, beta=None):
    grid = PathGrid(1.0, N, 2)
    phi = cx.Forced(cx.NormSquared(2, omega), cx.ConstantForcing(list(forcing)), 1.0)
    return Problem(kind, phi, make_boundary(bc_kind, 2), grid,
                   cx.GrowthBounds(omega if beta is None else beta))


def test_options_validation():
    with pytest.raises(ContractError):
        SolverOptions(gradient_tolerance=0)
    with pytest.raises(ContractError):
        Schedule(ratio=1.0)
    with pytest.raises(ContractError):
        SolverOptions(max_iterations=0)
    vals = list(Schedule(1e-2, 0.1, 1e-5).values())
    assert vals[0] == 1e-2 and vals[-1] == 1e-5 and len(vals) == 4


def test_quadratic_ivp():
    t0 = time.perf_counter()
    rep = minimize(ivp())
    assert time.perf_counter() - t0 < 1.0
    assert rep.converged and rep.objective <= 1e-6
    err = np.max(np.abs(rep.path.nodes[:, 0] - np.exp(-rep.path.grid.times)))
    assert err <= 5e-3


def test_zero_initial_value_gives_zero_path():
    rep = minimize(ivp(0.0))
    assert np.max(np.abs(rep.path.nodes)) <= 1e-12
    assert rep.objective <= 1e-20


def test_report_invariants():
    rep = minimize(ivp())
    h = rep.path.grid.h
    total = h * np.sum(rep.interval_residuals) + rep.boundary_residual
    assert rep.objective == pytest.approx(total, abs=1e-9)
    assert rep.objective >= -1e-9
    assert len(rep.interval_residuals) == 200
    d = rep.to_dict()
    assert set(d) >= {"objective", "converged", "iterations", "schedule_trace"}


def test_hamiltonian_anti_periodic_matches_rotation_solution():
    from scipy.linalg import expm
    omega, f = 0.4, np.array([0.3, -0.2])
    prob = hamiltonian(FlowKind.HAMILTONIAN_J1, "anti_periodic")
    rep = minimize(prob)
    assert rep.converged
    # u' = omega J u + J f, J = [[0, -1], [1, 0]]; u(T) = -u(0)
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    R = expm(omega * J)
    forced = np.linalg.solve(omega * J, (R - np.eye(2)) @ (J @ f))
    u0 = np.linalg.solve(np.eye(2) + R, -forced)
    ts = prob.grid.times
    exact = np.array([expm(omega * J * t) @ u0
                      + np.linalg.solve(omega * J, (expm(omega * J * t) - np.eye(2)) @ (J @ f))
                      for t in ts])
    assert np.max(np.abs(rep.path.nodes - exact)) <= 1e-2


def test_certify_examples():
    rep = minimize(ivp())
    assert certify(ivp(), rep.path, 1e-6).passed
    per = Problem(FlowKind.GRADIENT_FLOW, cx.NormSquared(1), make_boundary("periodic", 1),
                  PathGrid(1.0, 50, 1))
    c = certify(per, Path(per.grid, np.ones((51, 1))), 1e-6)
    assert not c.passed and c.max_interval_residual == pytest.approx(0.5)
    assert 0 <= c.location < 50
    for tol in (1e-300, 1e-6, 1.0):
        assert certify(per, per.grid.zeros(), tol).passed


def test_certify_accepts_external_paths_and_budget():
    prob = ivp(N=100)
    p = prob.grid.sample(lambda t: np.exp(-t))
    c = certify(prob, p, 1e-3)
    ev = evaluate(prob, p)
    assert c.passed == bool(np.max(ev.interval_residuals) <= 1e-3 and ev.boundary_residual <= 1e-3)
    # a passing certificate bounds the functional by 2 tol
    if c.passed:
        assert c.objective <= 2e-3


def test_resonance_guard_examples():
    assert resonance_guard(hamiltonian(FlowKind.HAMILTONIAN_J1, "anti_periodic")).status == "pass"
    warn = resonance_guard(hamiltonian(FlowKind.HAMILTONIAN_J1, "anti_periodic", beta=math.pi))
    assert warn.status == "warning"
    edge = resonance_guard(hamiltonian(FlowKind.HAMILTONIAN_J1, "anti_periodic",
                                       beta=math.pi / 2))
    assert edge.status == "warning"
    assert resonance_guard(ivp()).status == "not_applicable"


@pytest.mark.parametrize("prob_fn", [
    lambda: ivp(N=30),
    lambda: hamiltonian(FlowKind.HAMILTONIAN_J1, "skew_periodic", N=30),
    lambda: hamiltonian(FlowKind.HAMILTONIAN_J2, "skew_periodic", N=30),
    lambda: Problem(FlowKind.GRADIENT_FLOW,
                    cx.Forced(cx.Quadratic(np.diag([1.0, 3.0]), [0.1, 0.2]),
                              cx.SinusoidForcing([1.0, 0.5], [1.0, 2.0]), 1.0),
                    make_boundary("skew_periodic", 2), PathGrid(1.0, 30, 2)),
], ids=["ivp", "j1-skew", "j2-skew", "forced-2d"])
def test_gradient_matches_finite_differences(prob_fn):
    prob = prob_fn()
    rng = np.random.default_rng(0)
    for _ in range(20):
        X = rng.standard_normal((prob.grid.N + 1, prob.grid.d))
        G = functional_gradient(prob, Path(prob.grid, X))
        FD = np.zeros_like(X)
        step = 1e-6
        for idx in np.ndindex(X.shape):
            Xp, Xm = X.copy(), X.copy()
            Xp[idx] += step
            Xm[idx] -= step
            FD[idx] = (evaluate(prob, Path(prob.grid, Xp)).value
                       - evaluate(prob, Path(prob.grid, Xm)).value) / (2 * step)
        assert np.linalg.norm(G - FD) <= 1e-5 * max(1.0, np.linalg.norm(FD))


def test_determinism():
    prob = hamiltonian(FlowKind.HAMILTONIAN_J1, "anti_periodic", N=100)
    a, b = minimize(prob), minimize(prob)
    assert np.array_equal(a.path.nodes, b.path.nodes)
    assert a.objective == b.objective and a.iterations == b.iterations


def test_box_gap_uses_proximal_method():
    grid = PathGrid(1.0, 100, 1)
    phi = cx.Forced(cx.NormSquared(1), cx.SinusoidForcing([1.0], [1.0]), 1.0)
    bc = make_boundary("convex_set_gap", 1, K={"kind": "box", "lower": [-0.05], "upper": [0.05]})
    prob = Problem(FlowKind.GRADIENT_FLOW, phi, bc, grid)
    assert choose_method(prob, SolverOptions()) is Method.PROXIMAL
    rep = minimize(prob)
    assert rep.converged, rep.message
    a = rep.path.x0 - rep.path.xN
    assert -0.05 - 1e-12 <= a[0] <= 0.05 + 1e-12


def test_forced_quasi_newton_continuation_is_monotone():
    grid = PathGrid(1.0, 100, 1)
    phi = cx.Forced(cx.NormSquared(1), cx.SinusoidForcing([1.0], [1.0]), 1.0)
    bc = make_boundary("convex_set_gap", 1, K={"kind": "box", "lower": [-0.05], "upper": [0.05]})
    prob = Problem(FlowKind.GRADIENT_FLOW, phi, bc, grid)
    rep = minimize(prob, SolverOptions(method=Method.QUASI_NEWTON))
    assert rep.converged
    objs = [o for _, _, o in rep.schedule_trace]
    assert objs[-1] == min(objs)
    finite = [o for o in objs if math.isfinite(o)]
    assert all(b <= a + 1e-9 for a, b in zip(finite, finite[1:]))


def test_periodic_start_is_made_feasible():
    prob = Problem(FlowKind.GRADIENT_FLOW,
                   cx.Forced(cx.NormSquared(1), cx.SinusoidForcing([1.0], [1.0]), 1.0),
                   make_boundary("periodic", 1), PathGrid(1.0, 100, 1))
    init = prob.grid.sample(lambda t: t)       # violates x(0) = x(T)
    assert evaluate(prob, init).value == math.inf
    rep = minimize(prob, init=init)
    assert rep.converged
    assert rep.path.x0[0] == pytest.approx(rep.path.xN[0], abs=1e-12)


def test_nonconvergence_is_reported_not_raised():
    rep = minimize(hamiltonian(FlowKind.HAMILTONIAN_J1, "anti_periodic", N=200),
                   SolverOptions(max_iterations=2))
    assert not rep.converged
    assert math.isfinite(rep.objective) or rep.objective == math.inf


def test_init_on_wrong_grid():
    with pytest.raises(ContractError):
        minimize(ivp(N=50), init=PathGrid(1.0, 10).zeros())
