"""Selfdual functionals on discrete paths and the boundary-condition catalog.

Every functional here has the form ``sum_i h r_i + r_b``, where each
``r_i`` and ``r_b`` is a Fenchel-Young gap and is therefore nonnegative.
The value is computed from that sum, never as a difference of large terms.
In this decomposition the duality-pairing terms of the continuous
functional telescope exactly, because the state is evaluated at interval
midpoints of a piecewise-linear path.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .convex import (AffineIndicator, BallIndicator, BoxIndicator, DeclaredConjugate,
                     ConvexFunction, GrowthBounds, NormSquared, PointIndicator, Quadratic,
                     SeparableSum, Static, TimeConvexFunction, Zero, grid_sup)
from .convex.transforms import MoreauEnvelope
from .errors import ConjugateError, ContractError
from .paths import Path, PathGrid, apply_J, derivative, midpoints

log = logging.getLogger(__name__)


# -- boundary catalog ------------------------------------------------------

class BoundaryKind(str, enum.Enum):
    INITIAL_VALUE = "initial_value"
    PERIODIC = "periodic"
    ANTI_PERIODIC = "anti_periodic"
    CONVEX_SET_GAP = "convex_set_gap"
    SKEW_PERIODIC = "skew_periodic"
    CUSTOM = "custom"


SUPPORTED_SETS = ("point", "box", "ball", "affine")


@dataclass
class BoundaryCondition:
    """The boundary pair ``(psi, psi*)`` together with its kind tag.

    ``psi`` evaluates its own conjugate as ``psi_star``, so the boundary gap
    is always ``psi.fenchel_young_gap``.
    """

    kind: BoundaryKind
    psi: ConvexFunction
    psi_star: ConvexFunction
    data: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.psi.dim

    def gap(self, A, C):
        """Batched ``psi(a) + psi*(c) - <a, c>``."""
        return self.psi._gap(np.atleast_2d(A), np.atleast_2d(C))

    def advisories(self):
        """Sampled checks of 'bounded below' and '0 in dom psi'."""
        notes = []
        if not math.isfinite(self.psi(np.zeros(self.dim))):
            notes.append("0 is not in the domain of psi")
        # psi bounded below  <=>  0 in dom psi*
        if not math.isfinite(self.psi_star(np.zeros(self.dim))):
            notes.append("psi is not bounded below (psi*(0) = +inf)")
        return notes

    def validate(self, probes=20, seed=0):
        """Fenchel-Young equality probes at prox points; returns the worst defect."""
        rng = np.random.default_rng(seed)
        X = 3.0 * rng.standard_normal((probes, self.dim))
        P = self.psi._prox(1.0, X)
        S = X - P
        with np.errstate(invalid="ignore"):
            defect = self.psi_star._value(S) + self.psi._value(P) - np.sum(P * S, axis=1)
        defect = np.where(np.isnan(defect), math.inf, defect)
        worst = float(np.max(np.abs(defect)))
        if not worst <= 1e-8:
            raise ContractError(f"boundary pair is not a conjugate pair (defect {worst:.3g})")
        return worst


def _convex_set(spec, dim):
    if isinstance(spec, (PointIndicator, BoxIndicator, BallIndicator, AffineIndicator)):
        K = spec
    elif isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "point":
            K = PointIndicator(spec["point"])
        elif kind == "box":
            K = BoxIndicator(spec["lower"], spec["upper"])
        elif kind == "ball":
            K = BallIndicator(spec.get("center", np.zeros(dim)), spec["radius"])
        elif kind == "affine":
            K = AffineIndicator(spec["M"], spec["r"])
        else:
            raise ContractError(
                f"unsupported convex set {kind!r}; supported sets: {', '.join(SUPPORTED_SETS)}")
    else:
        raise ContractError(
            f"unsupported convex set {type(spec).__name__}; supported sets: "
            f"{', '.join(SUPPORTED_SETS)}")
    if K.dim != dim:
        raise ContractError(f"convex set has dimension {K.dim}, expected {dim}")
    return K


def make_boundary(kind, dim=None, **data) -> BoundaryCondition:
    """Build a catalog boundary condition.

    initial_value(x0), periodic(dim), anti_periodic(dim), skew_periodic(dim),
    convex_set_gap(K=...), custom(psi=..., psi_star=...).
    """
    try:
        kind = BoundaryKind(kind)
    except ValueError:
        raise ContractError(
            f"unknown boundary kind {kind!r}; supported: "
            f"{', '.join(k.value for k in BoundaryKind)}") from None

    if kind is BoundaryKind.INITIAL_VALUE:
        x0 = np.atleast_1d(np.asarray(data["x0"], dtype=float))
        if dim is not None and x0.size != dim:
            raise ContractError(f"x0 has length {x0.size}, expected {dim}")
        if not np.all(np.isfinite(x0)):
            raise ContractError("x0 must be finite")
        psi = Quadratic(0.5 * np.eye(x0.size), -x0)
        return BoundaryCondition(kind, psi, psi.conjugate_function(), {"x0": x0})

    if kind is BoundaryKind.CUSTOM:
        psi, psi_star = data["psi"], data["psi_star"]
        if psi.dim != psi_star.dim or (dim is not None and psi.dim != dim):
            raise ContractError("custom boundary pair has inconsistent dimensions")
        bc = BoundaryCondition(kind, DeclaredConjugate(psi, psi_star), psi_star, {})
        bc.validate()
        return bc

    if kind is BoundaryKind.CONVEX_SET_GAP:
        K = data.get("K")
        if K is None:
            raise ContractError("convex_set_gap needs a set K")
        if dim is None:
            dim = K.dim if isinstance(K, ConvexFunction) else len(
                np.atleast_1d(K.get("point", K.get("lower", K.get("center", [0.0])))))
        K = _convex_set(K, dim)
        return BoundaryCondition(kind, K, K.conjugate_function(), {"K": K})

    if dim is None:
        raise ContractError(f"{kind.value} boundary needs a dimension")
    if kind is BoundaryKind.PERIODIC:
        psi = PointIndicator(np.zeros(dim))
    elif kind is BoundaryKind.ANTI_PERIODIC:
        psi = Zero(dim)
    else:
        psi = NormSquared(dim)
    return BoundaryCondition(kind, psi, psi.conjugate_function(), {})


def boundary_lagrangian(bc: BoundaryCondition):
    """``G(a, b) = psi(a) + psi*(-b)``."""
    def G(a, b):
        return float(bc.psi(a) + bc.psi_star(-np.asarray(b, dtype=float)))
    return G


def regularized_boundary_lagrangian(bc: BoundaryCondition, lam):
    """``G_lam(a, b) = inf_z G(z, b) + |a - z|^2/(2 lam) + (lam/2)|b|^2``.

    For the separable ``G`` this is ``psi_lam(a) + psi*(-b) + (lam/2)|b|^2``,
    an inf-convolution in the first argument.
    """
    env = MoreauEnvelope(bc.psi, lam)

    def G(a, b):
        b = np.asarray(b, dtype=float)
        return float(env(a) + env.conjugate(-b))
    return G


# -- problems --------------------------------------------------------------

class FlowKind(str, enum.Enum):
    GRADIENT_FLOW = "gradient_flow"
    HAMILTONIAN_J1 = "hamiltonian_j1"
    HAMILTONIAN_J2 = "hamiltonian_j2"
    SECOND_ORDER = "second_order"


HAMILTONIAN_KINDS = (FlowKind.HAMILTONIAN_J1, FlowKind.HAMILTONIAN_J2)


@dataclass
class SecondOrderData:
    """Bookkeeping carried by a reduced second-order problem."""

    beta: float
    phi: TimeConvexFunction
    psi1: ConvexFunction
    psi2: ConvexFunction


@dataclass
class Problem:
    kind: FlowKind
    phi: TimeConvexFunction
    boundary: BoundaryCondition
    grid: PathGrid
    growth: Optional[GrowthBounds] = None
    second_order: Optional[SecondOrderData] = None

    def __post_init__(self):
        self.kind = FlowKind(self.kind)
        if isinstance(self.phi, ConvexFunction):
            self.phi = Static(self.phi, self.grid.T)
        if self.kind is FlowKind.SECOND_ORDER:
            raise ContractError("build second-order problems with second_order_reduce")
        d = self.grid.d
        if self.phi.dim != d:
            raise ContractError(f"potential has dimension {self.phi.dim}, grid has d={d}")
        if self.boundary.dim != d:
            raise ContractError(f"boundary has dimension {self.boundary.dim}, grid has d={d}")
        if self.kind in HAMILTONIAN_KINDS:
            if d % 2:
                raise ContractError(f"Hamiltonian problems need even d, got {d}")
            if self.growth is None:
                raise ContractError("Hamiltonian problems need declared growth bounds")
            limit = math.pi / (2 * self.grid.T)
            if not self.growth.beta < limit:
                # the discrete problem is still posed; resonance_guard reports it
                log.warning("growth beta=%g is not below pi/(2T)=%g", self.growth.beta, limit)

    @property
    def hamiltonian(self):
        return self.kind in HAMILTONIAN_KINDS


class Evaluation(NamedTuple):
    value: float
    interval_residuals: np.ndarray
    boundary_residual: float
    alpha: np.ndarray
    gamma: np.ndarray


class Channel(NamedTuple):
    """Boundary argument ``Q (k0 x_0 + kN x_N)`` with Q in {I, -I, J, -J}."""

    k0: float
    kN: float
    sign: float
    symplectic: bool

    def apply(self, x0, xN):
        y = self.k0 * np.asarray(x0) + self.kN * np.asarray(xN)
        return self.sign * (apply_J(y) if self.symplectic else y)

    def adjoint(self, y):
        # J' = -J
        y = np.asarray(y)
        return self.sign * (-apply_J(y) if self.symplectic else y)


class Layout(NamedTuple):
    """Where each functional evaluates phi* and the boundary pair."""

    interior_symplectic: bool   # second argument -J v instead of -v
    alpha: Channel
    gamma: Channel


LAYOUTS = {
    FlowKind.GRADIENT_FLOW: Layout(False, Channel(1.0, -1.0, 1.0, False),
                                   Channel(0.5, 0.5, -1.0, False)),
    FlowKind.HAMILTONIAN_J1: Layout(True, Channel(-1.0, 1.0, 1.0, False),
                                    Channel(0.5, 0.5, -1.0, True)),
    FlowKind.HAMILTONIAN_J2: Layout(True, Channel(1.0, 0.0, 1.0, False),
                                    Channel(0.0, 1.0, 1.0, True)),
}


def layout(kind) -> Layout:
    return LAYOUTS[FlowKind(kind)]


def interior_dual(kind, V):
    """Second argument of the interval gaps: ``-v`` or ``-J v``."""
    return -apply_J(V) if layout(kind).interior_symplectic else -V


def evaluate(prob: Problem, p: Path) -> Evaluation:
    """Residual-first evaluation of the problem's functional at ``p``."""
    if p.grid != prob.grid:
        raise ContractError("path is not on the problem's grid")
    lay = layout(prob.kind)
    M = midpoints(p)
    V = derivative(p)
    r = prob.phi.gap(prob.grid.midtimes, M, interior_dual(prob.kind, V))
    alpha = lay.alpha.apply(p.x0, p.xN)
    gamma = lay.gamma.apply(p.x0, p.xN)
    rb = float(prob.boundary.gap(alpha, gamma)[0])
    with np.errstate(invalid="ignore"):
        value = float(prob.grid.h * np.sum(r) + rb)
    if math.isnan(value):
        value = math.inf
    return Evaluation(value, r, rb, alpha, gamma)


def _check_kind(prob, kind):
    if prob.kind is not kind:
        raise ContractError(f"expected a {kind.value} problem, got {prob.kind.value}")


def gradient_flow_functional(prob: Problem, p: Path) -> Evaluation:
    _check_kind(prob, FlowKind.GRADIENT_FLOW)
    return evaluate(prob, p)


def hamiltonian_j1(prob: Problem, p: Path) -> Evaluation:
    _check_kind(prob, FlowKind.HAMILTONIAN_J1)
    return evaluate(prob, p)


def hamiltonian_j2(prob: Problem, p: Path) -> Evaluation:
    _check_kind(prob, FlowKind.HAMILTONIAN_J2)
    return evaluate(prob, p)


def direct_value(prob: Problem, p: Path) -> float:
    """Term-by-term evaluation of the functional, for cross-checking ``evaluate``.

    Sums the potential terms, the conjugate terms, the pairing integral and
    the boundary terms separately, exactly as the continuous functional reads.
    """
    g = prob.grid
    M, V = midpoints(p), derivative(p)
    ts = g.midtimes
    phi_part = g.h * np.sum(prob.phi.value(ts, M)
                            + prob.phi.conjugate(ts, interior_dual(prob.kind, V)))
    psi, psi_star = prob.boundary.psi, prob.boundary.psi_star
    x0, xN = p.x0, p.xN
    if prob.kind is FlowKind.GRADIENT_FLOW:
        # the pairing <x, x'> is not part of I; it appears only after splitting
        return float(phi_part + psi(x0 - xN) + psi_star(-(x0 + xN) / 2))
    JV = apply_J(V)
    pairing = g.h * np.sum(JV * M)
    if prob.kind is FlowKind.HAMILTONIAN_J1:
        b = (x0 + xN) / 2
        bnd = (xN - x0) @ apply_J(b) + psi(xN - x0) + psi_star(-apply_J(b))
    else:
        bnd = apply_J(x0) @ xN + psi(x0) + psi_star(apply_J(xN))
    return float(phi_part + pairing + bnd)


def boundary_relation_residual(prob: Problem, p: Path) -> float:
    """Norm of the boundary relation the catalog kind encodes.

    initial_value: |x(0) - x0|; periodic: |x(0) - x(T)|; anti_periodic:
    |x(0) + x(T)|; skew_periodic: |x(0) - J x(T)|; convex_set_gap: distance
    of the boundary difference to K.  Custom pairs report the boundary gap.
    """
    bc = prob.boundary
    x0, xN = p.x0, p.xN
    if bc.kind is BoundaryKind.INITIAL_VALUE:
        return float(np.linalg.norm(x0 - bc.data["x0"]))
    if bc.kind is BoundaryKind.PERIODIC:
        return float(np.linalg.norm(x0 - xN))
    if bc.kind is BoundaryKind.ANTI_PERIODIC:
        return float(np.linalg.norm(x0 + xN))
    if bc.kind is BoundaryKind.SKEW_PERIODIC:
        return float(np.linalg.norm(x0 - apply_J(xN)))
    if bc.kind is BoundaryKind.CONVEX_SET_GAP:
        a = layout(prob.kind).alpha.apply(x0, xN)
        return float(np.linalg.norm(a - bc.psi.prox(1.0, a)))
    return evaluate(prob, p).boundary_residual


# -- ASD identity check ----------------------------------------------------

def _sup_or_inf(objective, dim):
    try:
        return grid_sup(objective, dim)[0]
    except ConjugateError:
        return math.inf


def asd_check(phi: ConvexFunction, samples, lagrangian=None, method="grid"):
    """Max of ``|L*(p, x) - L(-x, -p)|`` over the samples ``(x, p)``.

    With ``L(x, p) = phi(x) + phi*(-p)`` the joint conjugate splits into two
    d-dimensional sups, each evaluated on a refined grid (``method="grid"``)
    or from the closed forms (``method="closed"``).  A user ``lagrangian``
    ``L(x, p)`` (batched over rows) is conjugated jointly on a 2d-dimensional
    grid, which needs d = 1.  Samples where both sides are +inf count as a
    match.
    """
    d = phi.dim
    if d > 2:
        raise ContractError("asd_check supports d <= 2")
    worst = 0.0
    for x, p in samples:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if lagrangian is None:
            target = phi(-x) + phi.conjugate(p)
            if method == "closed":
                lhs = phi.conjugate(p) + phi.conjugate_function().conjugate(-x)
            else:
                def first(X):
                    with np.errstate(invalid="ignore"):
                        v = X @ p - phi._value(X)
                    return np.where(np.isnan(v), -math.inf, v)

                def second(X):
                    with np.errstate(invalid="ignore"):
                        v = X @ x - phi._conjugate(-X)
                    return np.where(np.isnan(v), -math.inf, v)

                lhs = _sup_or_inf(first, d) + _sup_or_inf(second, d)
        else:
            if 2 * d > 3:
                raise ContractError("joint conjugation of a user Lagrangian needs d = 1")
            target = float(np.asarray(lagrangian(np.concatenate([-x, -p])[None]))[0])
            z = np.concatenate([p, x])

            def joint(Z):
                with np.errstate(invalid="ignore"):
                    v = Z @ z - np.asarray(lagrangian(Z), dtype=float)
                return np.where(np.isnan(v), -math.inf, v)

            lhs = _sup_or_inf(joint, 2 * d)
        if math.isinf(lhs) and math.isinf(target):
            continue
        worst = max(worst, abs(lhs - target)) if math.isfinite(lhs - target) else math.inf
    return worst


# -- second-order reduction ------------------------------------------------

class PhasePotential(TimeConvexFunction):
    """``Phi(t, (p, q)) = (beta/2)|p|^2 + phi(t, q) / beta`` on R^{2d}."""

    def __init__(self, phi: TimeConvexFunction, beta):
        super().__init__(2 * phi.dim, phi.horizon)
        self.phi, self.beta = phi, float(beta)
        self.n = phi.dim
        self.smooth = phi.smooth
        self.smooth_conjugate = phi.smooth_conjugate
        self.time_independent = phi.time_independent

    def at(self, t):
        from .convex.transforms import Scaled
        return SeparableSum([NormSquared(self.n, self.beta),
                             Scaled(self.phi.at(t), 1 / self.beta)])

    def _split(self, X):
        return X[:, :self.n], X[:, self.n:]

    def value(self, ts, X):
        P, Q = self._split(X)
        return 0.5 * self.beta * np.sum(P * P, axis=1) + self.phi.value(ts, Q) / self.beta

    def gradient(self, ts, X):
        P, Q = self._split(X)
        return np.concatenate([self.beta * P, self.phi.gradient(ts, Q) / self.beta], axis=1)

    def conjugate(self, ts, Y):
        P, Q = self._split(Y)
        return (np.sum(P * P, axis=1) / (2 * self.beta)
                + self.phi.conjugate(ts, self.beta * Q) / self.beta)

    def conjugate_gradient(self, ts, Y):
        P, Q = self._split(Y)
        return np.concatenate([P / self.beta, self.phi.conjugate_gradient(ts, self.beta * Q)],
                              axis=1)

    def gap(self, ts, X, Y):
        P, Q = self._split(X)
        YP, YQ = self._split(Y)
        R = self.beta * P - YP
        return (np.sum(R * R, axis=1) / (2 * self.beta)
                + self.phi.gap(ts, Q, self.beta * YQ) / self.beta)

    def map(self, transform):
        return PhasePotential(self.phi.map(transform), self.beta)


def second_order_reduce(phi: TimeConvexFunction, psi1: ConvexFunction, psi2: ConvexFunction,
                        beta, grid: PathGrid, kind=FlowKind.HAMILTONIAN_J1,
                        growth: Optional[GrowthBounds] = None) -> Problem:
    """Phase-space problem on R^{2d} for ``-q'' in d phi(t, q)``.

    The phase path ``u = (p, q)`` solves ``q' = beta p`` and
    ``-p' in d phi(t, q) / beta``.  ``grid`` gives T and N; its d is
    replaced by 2d.  The boundary pair is ``psi1(p) + psi2(q)``.
    """
    if isinstance(phi, ConvexFunction):
        phi = Static(phi, grid.T)
    beta = float(beta)
    limit = math.pi / (2 * grid.T)
    if not 0 < beta < limit:
        raise ContractError(
            f"second-order reduction needs beta in (0, pi/(2T)) = (0, {limit:.6g}); got {beta:g}")
    if psi1.dim != phi.dim or psi2.dim != phi.dim:
        raise ContractError("boundary functions must have the potential's dimension")
    kind = FlowKind(kind)
    if kind not in HAMILTONIAN_KINDS:
        raise ContractError("second-order reduction targets hamiltonian_j1 or hamiltonian_j2")
    Psi = SeparableSum([psi1, psi2])
    bc = BoundaryCondition(BoundaryKind.CUSTOM, Psi, Psi.conjugate_function(),
                           {"psi1": psi1, "psi2": psi2})
    for tag, sub in (("periodic", PointIndicator), ("anti_periodic", Zero)):
        if isinstance(psi1, sub) and isinstance(psi2, sub):
            bc.kind = BoundaryKind(tag)
    phase_grid = PathGrid(grid.T, grid.N, 2 * phi.dim)
    return Problem(kind, PhasePotential(phi, beta), bc, phase_grid,
                   growth or GrowthBounds(beta),
                   SecondOrderData(beta, phi, psi1, psi2))


def extract_second_order(prob: Problem, p: Path):
    """Return ``(q, qdot)`` node arrays from a solved phase path."""
    if prob.second_order is None:
        raise ContractError("problem was not built by second_order_reduce")
    n = prob.second_order.phi.dim
    return p.nodes[:, n:].copy(), prob.second_order.beta * p.nodes[:, :n]
