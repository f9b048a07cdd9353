import json
import math

import numpy as np
import pytest

from selfdual import convex as cx
from selfdual.errors import ContractError, OracleError
from selfdual.lagrangians import FlowKind, Problem, make_boundary
from selfdual.paths import Path, PathGrid
from selfdual.solver import certify, minimize
from selfdual.verify import (half_rotation, linear_flow_oracle, rk4_crosscheck, rk4_integrate,
                             rk4_oracle, flow_rhs, symplectic_bound_suite, wirtinger_suite)


def test_scalar_exponential_oracle():
    g = PathGrid(1.0, 50)
    sol = linear_flow_oracle(1.0, None, make_boundary("initial_value", x0=[1.0]), g)
    assert sol.kind == "closed_form_linear"
    assert np.allclose(sol.path.nodes[:, 0], np.exp(-g.times), rtol=1e-14, atol=0)


def test_anti_periodic_rotation_oracle():
    omega, f = 0.4, np.array([0.3, -0.2])
    g = PathGrid(1.0, 400, 2)
    sol = linear_flow_oracle(omega * np.eye(2), f, make_boundary("anti_periodic", 2), g,
                             "hamiltonian")
    X = sol.path.nodes
    assert np.allclose(X[-1], -X[0], atol=1e-13)
    # the path solves u' = omega J u + J f: check with a centered difference
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    mid = 0.5 * (X[1:] + X[:-1])
    fd = np.diff(X, axis=0) / g.h
    rhs = mid @ (omega * J).T + J @ f
    assert np.max(np.abs(fd - rhs)) <= 1e-5


def test_unforced_periodic_oracle_is_zero():
    g = PathGrid(1.0, 100, 2)
    sol = linear_flow_oracle(0.4 * np.eye(2), None, make_boundary("periodic", 2), g,
                             "hamiltonian")
    assert np.max(np.abs(sol.path.nodes)) == 0.0


def test_resonant_monodromy_raises():
    g = PathGrid(1.0, 100, 2)
    with pytest.raises(OracleError, match="anti-periodic"):
        linear_flow_oracle(math.pi * np.eye(2), None, make_boundary("anti_periodic", 2), g,
                           "hamiltonian")
    with pytest.raises(OracleError, match="periodic"):
        linear_flow_oracle(2 * math.pi * np.eye(2), None, make_boundary("periodic", 2), g,
                           "hamiltonian")


def test_callable_forcing_oracle_matches_closed_form():
    # -x' = x - sin(2 pi t), periodic
    g = PathGrid(1.0, 400)
    sol = linear_flow_oracle(1.0, lambda ts: -np.sin(2 * np.pi * ts)[:, None],
                             make_boundary("periodic", 1), g)
    t = g.times
    w = 2 * np.pi
    exact = (np.sin(w * t) - w * np.cos(w * t)) / (1 + w * w)
    assert np.max(np.abs(sol.path.nodes[:, 0] - exact)) <= 1e-12


def test_forced_periodic_gradient_flow():
    g = PathGrid(1.0, 400)
    phi = cx.Forced(cx.NormSquared(1), cx.SinusoidForcing([-1.0], [1.0]), 1.0)
    prob = Problem(FlowKind.GRADIENT_FLOW, phi, make_boundary("periodic", 1), g)
    rep = minimize(prob)
    assert rep.converged
    oracle = linear_flow_oracle(1.0, lambda ts: -np.sin(2 * np.pi * ts)[:, None],
                                prob.boundary, g)
    assert np.max(np.abs(oracle.path.nodes - rep.path.nodes)) <= 1e-2
    w = 2 * np.pi
    exact = (np.sin(w * g.times) - w * np.cos(w * g.times)) / (1 + w * w)
    assert np.max(np.abs(rep.path.nodes[:, 0] - exact)) <= 1e-2
    assert rk4_crosscheck(prob, rep) <= 1e-2


def test_rk4_on_ivp_and_zero_path():
    prob = Problem(FlowKind.GRADIENT_FLOW, cx.NormSquared(1),
                   make_boundary("initial_value", x0=[1.0]), PathGrid(1.0, 200))
    rep = minimize(prob)
    assert rk4_crosscheck(prob, rep) <= 5e-3
    zero = Problem(FlowKind.HAMILTONIAN_J1, cx.NormSquared(2, 0.4),
                   make_boundary("periodic", 2), PathGrid(1.0, 50, 2), cx.GrowthBounds(0.4))
    assert rk4_crosscheck(zero, zero.grid.zeros()) == 0.0


def test_rk4_order_and_richardson():
    errs = []
    for N in (20, 40, 80):
        g = PathGrid(1.0, N, 2)
        A = np.array([[2.0, 0.3], [0.3, 1.0]])
        bc = make_boundary("initial_value", x0=[1.0, -1.0])
        prob = Problem(FlowKind.GRADIENT_FLOW, cx.Quadratic(A), bc, g)
        exact = linear_flow_oracle(A, None, bc, g).path.nodes
        errs.append(np.max(np.abs(rk4_integrate(flow_rhs(prob), [1.0, -1.0], g).nodes - exact)))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(12 < r < 20 for r in ratios), ratios
    est = rk4_oracle(prob, [1.0, -1.0])
    assert est.kind == "rk4"
    true_err = np.max(np.abs(est.path.nodes - exact))
    assert true_err <= 3 * est.accuracy_estimate + 1e-15


def test_rk4_blow_up_reports_step():
    g = PathGrid(1.0, 10)
    with pytest.raises(OracleError, match="step"):
        rk4_integrate(lambda t, x: x ** 3 * 1e6, [1.0], g)


@pytest.mark.parametrize("bc_kind,kind,fkind", [
    ("periodic", "hamiltonian", FlowKind.HAMILTONIAN_J1),
    ("anti_periodic", "hamiltonian", FlowKind.HAMILTONIAN_J1),
    ("skew_periodic", "hamiltonian", FlowKind.HAMILTONIAN_J2),
    ("initial_value", "gradient", FlowKind.GRADIENT_FLOW),
])
def test_oracle_passes_certificate(bc_kind, kind, fkind):
    g = PathGrid(1.0, 400, 2)
    data = {"x0": [1.0, 0.5]} if bc_kind == "initial_value" else {}
    bc = make_boundary(bc_kind, 2, **data)
    f = np.array([0.3, -0.2])
    phi = cx.Forced(cx.NormSquared(2, 0.4), cx.ConstantForcing(f), 1.0)
    prob = Problem(fkind, phi, bc, g, cx.GrowthBounds(0.4) if kind == "hamiltonian" else None)
    sol = linear_flow_oracle(0.4 * np.eye(2), f, bc, g, kind)
    assert certify(prob, sol.path, 1e-6).passed


def test_point_gap_oracle_matches_solver():
    g = PathGrid(1.0, 200)
    bc = make_boundary("convex_set_gap", 1, K={"kind": "point", "point": [0.2]})
    phi = cx.Forced(cx.NormSquared(1), cx.ConstantForcing([0.5]), 1.0)
    prob = Problem(FlowKind.GRADIENT_FLOW, phi, bc, g)
    rep = minimize(prob)
    sol = linear_flow_oracle(1.0, [0.5], bc, g)
    assert rep.path.x0[0] - rep.path.xN[0] == pytest.approx(0.2, abs=1e-9)
    assert np.max(np.abs(sol.path.nodes - rep.path.nodes)) <= 1e-4


def test_wirtinger_examples():
    g = PathGrid(1.0, 2000)
    p = g.sample(lambda t: np.cos(np.pi * t))
    from selfdual.paths import energy, l2_squared, sup_norm_sq
    assert l2_squared(p) / energy(p) == pytest.approx(1 / math.pi ** 2, rel=1e-4)
    assert sup_norm_sq(p) == 1.0 <= 0.25 * energy(p)
    assert 0.25 * energy(p) == pytest.approx(math.pi ** 2 / 8, rel=1e-5)
    z = g.zeros()
    assert l2_squared(z) == energy(z) == 0.0


def test_suites_pass_and_serialize():
    w = wirtinger_suite(PathGrid(1.0, 2000), trials=200, seed=0)
    s = symplectic_bound_suite(PathGrid(1.0, 2000, 2), trials=200, seed=0)
    for rep in (w, s):
        assert rep.passed and rep.violations == 0
        payload = json.loads(rep.to_json())
        assert {"suite", "trials", "worst_slack", "location", "allowance"} <= set(payload)
    assert w.extremal["relative_error"] <= 1e-4
    assert s.extremal["difference"] <= 2e-3


def test_suites_are_seeded():
    a = wirtinger_suite(PathGrid(1.0, 500), trials=20, seed=7)
    b = wirtinger_suite(PathGrid(1.0, 500), trials=20, seed=7)
    assert a.worst_slack == b.worst_slack and a.location == b.location


def test_suite_contracts():
    with pytest.raises(ContractError):
        wirtinger_suite(PathGrid(1.0, 100), trials=0)
    with pytest.raises(ContractError):
        symplectic_bound_suite(PathGrid(1.0, 100, 3))


def test_half_rotation_equality_and_straight_path():
    from selfdual.paths import energy, symplectic_cross_term
    g = PathGrid(1.0, 2000, 2)
    rot = half_rotation(g)
    assert abs(abs(symplectic_cross_term(rot)) - energy(rot) / math.pi) <= 2e-3
    straight = g.sample(lambda t: np.stack([t, 0 * t], axis=1))
    assert symplectic_cross_term(straight) == 0.0 < energy(straight) / math.pi
    # the weaker T/2 bound holds too
    assert abs(symplectic_cross_term(rot)) <= 0.5 * energy(rot)


def test_bound_violation_is_detected():
    # a path beating the bound would be flagged: check the slack sign convention directly
    g = PathGrid(1.0, 200, 2)
    rot = half_rotation(g)
    X = rot.nodes.copy()
    from selfdual.paths import energy, symplectic_cross_term
    val = abs(symplectic_cross_term(Path(g, X)))
    assert val <= energy(rot) / math.pi * (1 + 1e-3)
