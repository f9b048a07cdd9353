"""Independent reference solutions and inequality property suites.

The linear oracle solves ``x' = M x + g(t)`` exactly with matrix
exponentials and imposes the boundary relation as a linear system in
``x(0)``.  The RK4 integrator gives a second, method-independent check for
nonlinear potentials.  The suites verify the anti-periodic Wirtinger and
Sobolev bounds and the symplectic cross-term bound on random paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import ContractError, OracleError
from .lagrangians import BoundaryCondition, BoundaryKind, FlowKind, Problem
from .paths import (Path, PathGrid, antiperiodic_sample, apply_J, energy, l2_squared,
                    sup_norm_sq, symplectic_cross_term)


@dataclass
class OracleSolution:
    kind: str                  # "closed_form_linear" or "rk4"
    path: Path
    accuracy_estimate: float


# -- linear oracle ---------------------------------------------------------

def _symplectic_matrix(d):
    return apply_J(np.eye(d)).T


def _forcing_sampler(f, d):
    if f is None:
        return None, np.zeros(d)
    if callable(f):
        return f, None
    v = np.atleast_1d(np.asarray(f, dtype=float))
    if v.shape != (d,):
        raise ContractError(f"forcing must have length {d}")
    return None, v


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def linear_flow_oracle(A, f, bc: BoundaryCondition, grid: PathGrid, kind="gradient",
                       functional: Optional[FlowKind] = None) -> OracleSolution:
    """Exact solution of a linear flow under a catalog boundary condition.

    gradient:    x' = -A x - f(t)             (from -x' = A x + f)
    hamiltonian: u' = J A u + J f(t)          (from -J u' = A u + f)

    ``f`` is None, a constant vector, or a callable mapping an array of
    times to an ``(n, d)`` array.  ``functional`` selects the boundary
    argument convention for a convex-set gap with a point set (defaults to
    the gradient-flow and first Hamiltonian functional conventions).
    """
    d = grid.d
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = A * np.eye(d)
    if A.shape != (d, d):
        raise ContractError(f"A must be {d}x{d}")
    if kind == "gradient":
        Mmat, Fmap = -A, -np.eye(d)
    elif kind == "hamiltonian":
        Jm = _symplectic_matrix(d)
        Mmat, Fmap = Jm @ A, Jm
    else:
        raise ContractError("kind must be 'gradient' or 'hamiltonian'")
    fn, const = _forcing_sampler(f, d)
    h = grid.h

    Phi_h = expm(Mmat * h)
    if fn is None:
        # Van Loan block exponential gives int_0^h e^{Ms} ds g
        aug = np.zeros((d + 1, d + 1))
        aug[:d, :d] = Mmat
        aug[:d, d] = Fmap @ const
        q = expm(aug * h)[:d, d]
        steps = np.broadcast_to(q, (grid.N, d))
    else:
        # 16-point Gauss-Legendre per interval on s -> e^{M(t_{i+1} - s)} g(s)
        steps = np.zeros((grid.N, d))
        offs = 0.5 * h * (_GL_NODES + 1.0)
        kernels = np.array([expm(Mmat * (h - s)) for s in offs])
        for i in range(grid.N):
            G = np.asarray(fn(i * h + offs), dtype=float) @ Fmap.T
            steps[i] = 0.5 * h * np.einsum("k,kij,kj->i", _GL_WEIGHTS, kernels, G)

    # x_i = Phi_i x0 + c_i
    Phis = np.empty((grid.N + 1, d, d))
    cs = np.zeros((grid.N + 1, d))
    Phis[0] = np.eye(d)
    for i in range(grid.N):
        Phis[i + 1] = Phi_h @ Phis[i]
        cs[i + 1] = Phi_h @ cs[i] + steps[i]
    Phi, c = Phis[-1], cs[-1]
    I = np.eye(d)
    J = _symplectic_matrix(d) if d % 2 == 0 else None

    if bc.kind is BoundaryKind.INITIAL_VALUE:
        x0 = bc.data["x0"]
    else:
        if bc.kind is BoundaryKind.PERIODIC:
            lhs, rhs, what = I - Phi, c, "I - Phi (periodic)"
        elif bc.kind is BoundaryKind.ANTI_PERIODIC:
            lhs, rhs, what = I + Phi, -c, "I + Phi (anti-periodic)"
        elif bc.kind is BoundaryKind.SKEW_PERIODIC:
            if J is None:
                raise ContractError("skew-periodic needs even d")
            lhs, rhs, what = I - J @ Phi, J @ c, "I - J Phi (skew-periodic)"
        elif bc.kind is BoundaryKind.CONVEX_SET_GAP and hasattr(bc.psi, "point"):
            k = bc.psi.point
            fk = FlowKind(functional) if functional is not None else (
                FlowKind.GRADIENT_FLOW if kind == "gradient" else FlowKind.HAMILTONIAN_J1)
            if fk is FlowKind.GRADIENT_FLOW:
                lhs, rhs = I - Phi, k + c
            elif fk is FlowKind.HAMILTONIAN_J1:
                lhs, rhs = Phi - I, k - c
            else:
                lhs, rhs = I, k
            what = "boundary-difference system"
        else:
            raise OracleError(
                f"linear oracle supports initial_value, periodic, anti_periodic, "
                f"skew_periodic and point-set gaps, not {bc.kind.value}")
        # relative to the matrices it was formed from, so I + Phi ~ 0 counts as singular
        smin = float(np.linalg.svd(lhs, compute_uv=False)[-1])
        scale = 1.0 + float(np.linalg.norm(Phi, 2))
        if not smin > 1e-12 * scale:
            raise OracleError(
                f"monodromy matrix {what} is singular (smallest singular value "
                f"{smin:.3g}); the boundary relation does not pin a unique solution")
        x0 = np.linalg.solve(lhs, rhs)
    X = Phis @ x0 + cs
    scale = max(1.0, float(np.max(np.abs(X))))
    return OracleSolution("closed_form_linear", Path(grid, X),
                          float(np.finfo(float).eps * grid.N * scale))


# -- RK4 -------------------------------------------------------------------

def flow_rhs(prob: Problem):
    """Vector field of the problem's flow: -grad phi or J grad phi."""
    phi = prob.phi
    if prob.hamiltonian:
        return lambda t, x: apply_J(phi.gradient(np.array([t]), x[None])[0])
    return lambda t, x: -phi.gradient(np.array([t]), x[None])[0]


def rk4_integrate(rhs, x0, grid: PathGrid, substeps=1) -> Path:
    """Classical RK4 from ``x0`` over the grid, ``substeps`` steps per interval."""
    x = np.array(x0, dtype=float)
    X = np.empty((grid.N + 1, grid.d))
    X[0] = x
    h = grid.h / substeps
    for i in range(grid.N):
        t = i * grid.h
        for _ in range(substeps):
            k1 = rhs(t, x)
            k2 = rhs(t + h / 2, x + h / 2 * k1)
            k3 = rhs(t + h / 2, x + h / 2 * k2)
            k4 = rhs(t + h, x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e150:
            raise OracleError(f"RK4 integration blew up at step {i + 1}")
        X[i + 1] = x
    return Path(grid, X)


def rk4_oracle(prob: Problem, x0) -> OracleSolution:
    """RK4 path with a step-halving Richardson accuracy estimate."""
    rhs = flow_rhs(prob)
    coarse = rk4_integrate(rhs, x0, prob.grid)
    fine = rk4_integrate(rhs, x0, prob.grid, substeps=2)
    est = float(np.max(np.abs(coarse.nodes - fine.nodes))) * 16.0 / 15.0
    return OracleSolution("rk4", fine, est / 16.0)


def rk4_crosscheck(prob: Problem, report) -> float:
    """Max node deviation between the solved path and RK4 from its first node."""
    path = report.path if hasattr(report, "path") else report
    ref = rk4_integrate(flow_rhs(prob), path.x0, prob.grid)
    return float(np.max(np.abs(ref.nodes - path.nodes)))


# -- inequality suites -----------------------------------------------------

@dataclass
class SuiteReport:
    suite: str
    trials: int
    worst_slack: float
    location: int
    allowance: float
    violations: int = 0
    extremal: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.violations == 0 and all(self.extremal.get("ok", [True]))

    def to_json(self):
        payload = {k: v for k, v in asdict(self).items()}
        payload["passed"] = self.passed
        return json.dumps(payload)


def _calibrate(defect, T, d):
    """Constant C in the allowance C h^2 from the extremal mode at N=2000 and 4000."""
    consts = []
    for N in (2000, 4000):
        g = PathGrid(T, N, d)
        consts.append(defect(g) / g.h ** 2)
    return max(consts)


def _wirtinger_mode(grid):
    c = np.zeros(grid.d, dtype=complex)
    c[0] = 1.0
    return antiperiodic_sample(grid, [(1, c)])


def _wirtinger_defect(grid):
    p = _wirtinger_mode(grid)
    return abs(1.0 - l2_squared(p) / ((grid.T / math.pi) ** 2 * energy(p)))


def _random_antiperiodic(grid, rng):
    n_modes = int(rng.integers(1, 6))
    ks = rng.choice(np.arange(-4, 6), size=n_modes, replace=False)
    coeffs = [(int(k), (rng.standard_normal(grid.d) + 1j * rng.standard_normal(grid.d))
               / (1 + abs(2 * k - 1))) for k in ks]
    return antiperiodic_sample(grid, coeffs)


def _relative_slack(lhs, rhs):
    if rhs == 0 and lhs == 0:
        return 0.0
    return (rhs - lhs) / max(abs(rhs), 1e-300)


def wirtinger_suite(grid: PathGrid, trials=200, seed=0) -> SuiteReport:
    """Anti-periodic L2 (T^2/pi^2) and sup-norm (T/4) bounds on random paths.

    Slack is relative: ``(rhs - lhs) / rhs``; a trial violates when its
    slack is below ``-allowance``.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    T = grid.T
    allowance = _calibrate(_wirtinger_defect, T, grid.d) * grid.h ** 2
    rng = np.random.default_rng(seed)
    worst, where, bad = math.inf, -1, 0
    for k in range(trials):
        p = _random_antiperiodic(grid, rng)
        E = energy(p)
        s1 = _relative_slack(l2_squared(p), (T / math.pi) ** 2 * E)
        s2 = _relative_slack(sup_norm_sq(p), T / 4 * E)
        s = min(s1, s2)
        bad += int(s < -allowance)
        if s < worst:
            worst, where = s, k
    mode = _wirtinger_mode(grid)
    ratio = l2_squared(mode) / energy(mode)
    target = (T / math.pi) ** 2
    rel = abs(ratio - target) / target
    return SuiteReport("wirtinger", trials, float(worst), where, float(allowance), bad,
                       {"ratio": ratio, "target": target, "relative_error": rel,
                        "ok": [bool(rel <= 1e-4)]})


def half_rotation(grid: PathGrid) -> Path:
    """``(cos(pi t/T), sin(pi t/T))`` in the first symplectic plane."""
    if grid.d % 2:
        raise ContractError("half rotation needs even d")
    n = grid.d // 2
    X = np.zeros((grid.N + 1, grid.d))
    X[:, 0] = np.cos(np.pi * grid.times / grid.T)
    X[:, n] = np.sin(np.pi * grid.times / grid.T)
    return Path(grid, X)


def _rotation_defect(grid):
    p = half_rotation(grid)
    return abs(1.0 - abs(symplectic_cross_term(p)) / (grid.T / math.pi * energy(p)))


def _random_path(grid, rng, k):
    if k % 2 == 0:
        # rough: Gaussian random walk plus offset
        steps = rng.standard_normal((grid.N, grid.d)) * math.sqrt(grid.h)
        X = np.vstack([np.zeros((1, grid.d)), np.cumsum(steps, axis=0)])
        X += rng.standard_normal(grid.d)
        return Path(grid, X)
    # smooth: a few random Fourier modes plus a linear drift
    ts = grid.times[:, None] / grid.T
    X = rng.standard_normal(grid.d) + rng.standard_normal(grid.d) * ts
    for m in range(1, 4):
        X = X + (rng.standard_normal(grid.d) * np.cos(m * np.pi * ts)
                 + rng.standard_normal(grid.d) * np.sin(m * np.pi * ts)) / m
    return Path(grid, X)


def symplectic_bound_suite(grid: PathGrid, trials=200, seed=0) -> SuiteReport:
    """``|symplectic cross term| <= (T/pi) int |u'|^2`` on random paths.

    The weaker ``(T/2)`` bound is implied since T/pi < T/2 and is not
    tested separately.
    """
    if grid.d % 2:
        raise ContractError("symplectic suite needs even d")
    if trials < 1:
        raise ContractError("trials must be >= 1")
    T = grid.T
    allowance = _calibrate(_rotation_defect, T, grid.d) * grid.h ** 2
    rng = np.random.default_rng(seed)
    worst, where, bad = math.inf, -1, 0
    for k in range(trials):
        p = _random_path(grid, rng, k)
        s = _relative_slack(abs(symplectic_cross_term(p)), T / math.pi * energy(p))
        bad += int(s < -max(allowance, 1e-12))
        if s < worst:
            worst, where = s, k
    rot = half_rotation(grid)
    value = symplectic_cross_term(rot)
    bound = T / math.pi * energy(rot)
    return SuiteReport("symplectic", trials, float(worst), where, float(allowance), bad,
                       {"value": value, "bound": bound, "difference": abs(abs(value) - bound),
                        "ok": [bool(abs(abs(value) - bound) <= 2e-3)]})
