"""Minimization of the discrete selfdual functionals and certificates.

The optimization variable is a rescaled form of the path: the endpoint
mean ``beta = (x_0 + x_N) / (2c)`` with ``c = sqrt(T)/2``, plus the
interval increments ``w_j = (x_{j+1} - x_j) / sqrt(h)``.  In these
coordinates the squared path norm ``|mean|^2 + int |x'|^2`` is a plain sum
of squares, which keeps quasi-Newton and proximal steps well scaled
independently of N.

Each functional's two boundary arguments are linear maps of ``(x_0, x_N)``
with orthogonal row spaces in these coordinates, so a boundary term that
is an indicator or otherwise nonsmooth has an exact closed-form prox.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .convex import regularize, regularize_potential
from .errors import ContractError, SolverError
from .lagrangians import (BoundaryKind, Channel, FlowKind, Problem, evaluate, layout)
from .paths import Path, apply_J

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    AUTO = "auto"
    QUASI_NEWTON = "quasi_newton_smooth"
    PROXIMAL = "proximal_gradient_accelerated"


@dataclass(frozen=True)
class Schedule:
    """Geometric sequence ``start * ratio**k`` stopped at ``floor``."""

    start: float = 1e-2
    ratio: float = 0.1
    floor: float = 1e-8

    def __post_init__(self):
        if not (self.start > 0 and self.floor > 0):
            raise ContractError("schedule start and floor must be positive")
        if not 0 < self.ratio < 1:
            raise ContractError("schedule ratio must lie in (0, 1)")

    def values(self):
        v = self.start
        while v > self.floor:
            yield v
            v *= self.ratio
        yield self.floor


@dataclass
class SolverOptions:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-9
    objective_tolerance: float = 1e-8
    epsilon_schedule: Schedule = field(default_factory=Schedule)
    lambda_schedule: Schedule = field(default_factory=Schedule)
    method: Method = Method.AUTO
    memory: int = 20

    def __post_init__(self):
        self.method = Method(self.method)
        if int(self.max_iterations) < 1:
            raise ContractError("max_iterations must be positive")
        if not (self.gradient_tolerance > 0 and self.objective_tolerance > 0):
            raise ContractError("tolerances must be positive")


@dataclass
class SolveReport:
    path: Path
    objective: float
    interval_residuals: np.ndarray
    boundary_residual: float
    iterations: int
    converged: bool
    schedule_trace: list
    stationarity: float = math.nan
    method: str = ""
    message: str = ""

    def to_dict(self):
        return {
            "objective": self.objective,
            "boundary_residual": self.boundary_residual,
            "max_interval_residual": float(np.max(self.interval_residuals)),
            "iterations": self.iterations,
            "converged": self.converged,
            "stationarity": self.stationarity,
            "method": self.method,
            "message": self.message,
            "schedule_trace": [list(s) for s in self.schedule_trace],
        }


# -- transcription ---------------------------------------------------------

SMOOTH, AFFINE, PROX = "smooth", "affine", "prox"


class _BoundaryChannel:
    """One boundary argument ``y = Q (k0 x_0 + kN x_N)`` and its function."""

    def __init__(self, channel: Channel, fn, c, N):
        self.channel, self.fn = channel, fn
        self.u_beta = c * (channel.k0 + channel.kN)
        self.u_e = c * (channel.kN - channel.k0)
        self.r2 = self.u_beta ** 2 + self.u_e ** 2
        self.sqrt_n = math.sqrt(N)
        self.split = None
        if fn.smooth:
            self.type = SMOOTH
        else:
            self.split = fn.affine_split()
            self.type = AFFINE if self.split is not None else PROX

    def lift(self, z, dy, d):
        # z += B' dy with B z = y
        back = self.channel.adjoint(dy)
        z[:d] += self.u_beta * back
        z[d:].reshape(-1, d)[:] += (self.u_e / self.sqrt_n) * back


class _Transcription:
    """Smooth/nonsmooth split of one regularization stage in scaled coordinates."""

    def __init__(self, prob: Problem, phi, psi):
        g = prob.grid
        self.prob, self.phi, self.psi = prob, phi, psi
        self.N, self.d, self.h = g.N, g.d, g.h
        self.c = math.sqrt(g.T) / 2
        self.sqrt_h = math.sqrt(g.h)
        self.ts = g.midtimes
        lay = layout(prob.kind)
        self.symplectic = lay.interior_symplectic
        self.alpha = _BoundaryChannel(lay.alpha, psi, self.c, g.N)
        self.gamma = _BoundaryChannel(lay.gamma, psi.conjugate_function(), self.c, g.N)
        self.channels = (self.alpha, self.gamma)
        self.both_smooth = all(ch.type == SMOOTH for ch in self.channels)

    @property
    def size(self):
        return (self.N + 1) * self.d

    # coordinates
    def to_nodes(self, z):
        d = self.d
        beta = z[:d]
        W = z[d:].reshape(self.N, d)
        C = np.vstack([np.zeros((1, d)), np.cumsum(W, axis=0)])
        return self.c * beta + self.sqrt_h * (C - 0.5 * C[-1])

    def from_nodes(self, X):
        beta = (X[0] + X[-1]) / (2 * self.c)
        W = np.diff(X, axis=0) / self.sqrt_h
        return np.concatenate([beta, W.ravel()])

    def nodes_adjoint(self, G):
        total = G.sum(axis=0)
        # suffix sums over i > j
        after = np.cumsum(G[::-1], axis=0)[::-1][1:]
        gw = self.sqrt_h * (after - 0.5 * total)
        return np.concatenate([self.c * total, gw.ravel()])

    def _dual(self, V):
        return -apply_J(V) if self.symplectic else -V

    def _dual_adjoint(self, G):
        # adjoint of V -> -J V is V -> J V, since J' = -J
        return apply_J(G) if self.symplectic else -G

    # smooth part
    def smooth(self, z):
        X = self.to_nodes(z)
        M = 0.5 * (X[:-1] + X[1:])
        V = np.diff(X, axis=0) / self.h
        Y = self._dual(V)
        h = self.h
        f = h * float(np.sum(self.phi.gap(self.ts, M, Y)))
        Gm = h * (self.phi.gradient(self.ts, M) - Y)
        Gv = self._dual_adjoint(h * (self.phi.conjugate_gradient(self.ts, Y) - M))
        G = np.zeros_like(X)
        G[:-1] += 0.5 * Gm - Gv / h
        G[1:] += 0.5 * Gm + Gv / h

        x0, xN = X[0], X[-1]
        a = self.alpha.channel.apply(x0, xN)
        b = self.gamma.channel.apply(x0, xN)
        if self.both_smooth:
            fb = float(self.psi._gap(a[None], b[None])[0])
            ga = self.psi._gradient(a[None])[0] - b
            gb = self.psi._conjugate_gradient(b[None])[0] - a
        else:
            fb = -float(a @ b)
            ga, gb = -b, -a
            parts = []
            for ch, y in zip(self.channels, (a, b)):
                fn = ch.fn if ch.type == SMOOTH else (ch.split.remainder if ch.type == AFFINE
                                                       else None)
                if fn is None:
                    parts.append(0.0)
                    continue
                fb += float(fn._value(y[None])[0])
                parts.append(fn._gradient(y[None])[0])
            ga = ga + parts[0]
            gb = gb + parts[1]
        for ch, gy in ((self.alpha, ga), (self.gamma, gb)):
            back = ch.channel.adjoint(gy)
            G[0] += ch.channel.k0 * back
            G[-1] += ch.channel.kN * back
        return f + fb, self.nodes_adjoint(G)

    # nonsmooth part
    def _channel_value(self, z):
        X0, XN = self._ends(z)
        return (ch.channel.apply(X0, XN) for ch in self.channels)

    def _ends(self, z):
        d = self.d
        e = z[d:].reshape(self.N, d).sum(axis=0) / math.sqrt(self.N)
        return self.c * (z[:d] - e), self.c * (z[:d] + e)

    def nonsmooth_value(self, z):
        total = 0.0
        for ch, y in zip(self.channels, self._channel_value(z)):
            if ch.type == PROX:
                total += float(ch.fn._value(y[None])[0])
            elif ch.type == AFFINE:
                dist = np.linalg.norm(ch.split.project(y[None])[0] - y)
                if dist > 1e-9 * max(1.0, np.linalg.norm(y)):
                    return math.inf
        return total

    def prox(self, t, z, projections_only=False):
        z = z.copy()
        for ch in self.channels:
            if ch.type == SMOOTH or (projections_only and ch.type == PROX) or ch.r2 == 0:
                continue
            y = ch.channel.apply(*self._ends(z))
            if ch.type == AFFINE:
                target = ch.split.project(y[None])[0]
            else:
                target = ch.fn._prox(t * ch.r2, y[None])[0]
            ch.lift(z, (target - y) / ch.r2, self.d)
        return z

    def project(self, z):
        return self.prox(1.0, z, projections_only=True)


# -- algorithms ------------------------------------------------------------

class _Result(NamedTuple):
    z: np.ndarray
    iterations: int
    stationarity: float
    message: str


def _quasi_newton(tr: _Transcription, z0, opts: SolverOptions, max_iter):
    P = tr.project
    zero = P(np.zeros(tr.size))

    def reduced(g):
        return P(g) - zero

    def fun(y):
        f, g = tr.smooth(P(y))
        return f, reduced(g)

    y = P(z0)
    used = 0
    message = ""
    gtol = opts.gradient_tolerance
    for _ in range(4):
        res = scipy_minimize(fun, y, jac=True, method="L-BFGS-B",
                             options={"maxiter": max(1, max_iter - used), "maxcor": opts.memory,
                                      "gtol": 0.5 * gtol, "ftol": 0.0, "maxls": 50,
                                      "maxfun": 4 * max_iter})
        used += int(res.nit)
        y = res.x
        message = str(res.message)
        stat = float(np.max(np.abs(fun(y)[1])))
        if stat <= gtol or used >= max_iter:
            break
    z = P(y)
    stat = float(np.max(np.abs(reduced(tr.smooth(z)[1]))))
    return _Result(z, used, stat, message)


def _gradient_mapping(tr, z, t):
    _, g = tr.smooth(z)
    return float(np.max(np.abs(z - tr.prox(t, z - t * g)))) / t


def _proximal(tr: _Transcription, z0, opts: SolverOptions, max_iter):
    z = tr.prox(1.0, z0)
    f, g = tr.smooth(z)
    # initial step from a secant estimate of the Lipschitz constant
    probe = z - 1e-3 * g / max(1e-300, float(np.linalg.norm(g)))
    _, g2 = tr.smooth(probe)
    L = float(np.linalg.norm(g2 - g) / max(1e-300, np.linalg.norm(probe - z)))
    t = 1.0 / L if L > 0 else 1.0
    obj = f + tr.nonsmooth_value(z)
    y, theta = z.copy(), 1.0
    stat = math.inf
    k = 0
    for k in range(1, max_iter + 1):
        fy, gy = tr.smooth(y)
        t *= 1.25
        while True:
            z_new = tr.prox(t, y - t * gy)
            f_new, _ = tr.smooth(z_new)
            step = z_new - y
            if f_new <= fy + gy @ step + (step @ step) / (2 * t) + 1e-15 * abs(fy):
                break
            t *= 0.5
            if t < 1e-20:
                return _Result(z, k, _gradient_mapping(tr, z, 1e-20), "step size underflow")
        obj_new = f_new + tr.nonsmooth_value(z_new)
        stat = float(np.max(np.abs(step))) / t
        if obj_new > obj:
            # function-value restart
            theta, y = 1.0, z.copy()
            continue
        theta_next = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        y = z_new + ((theta - 1) / theta_next) * (z_new - z)
        z, obj, theta = z_new, obj_new, theta_next
        if stat <= opts.gradient_tolerance:
            stat = _gradient_mapping(tr, z, t)
            if stat <= opts.gradient_tolerance:
                return _Result(z, k, stat, "gradient mapping below tolerance")
    return _Result(z, k, _gradient_mapping(tr, z, t), "iteration limit reached")


# -- public API ------------------------------------------------------------

def _default_init(prob: Problem):
    g = prob.grid
    X = np.zeros((g.N + 1, g.d))
    if prob.boundary.kind is BoundaryKind.INITIAL_VALUE:
        X[:] = prob.boundary.data["x0"]
    return X


def choose_method(prob: Problem, opts: SolverOptions) -> Method:
    """Proximal splitting when some boundary channel needs a genuine prox."""
    if opts.method is not Method.AUTO:
        return opts.method
    lay = layout(prob.kind)
    c = math.sqrt(prob.grid.T) / 2
    psi = prob.boundary.psi
    chans = (_BoundaryChannel(lay.alpha, psi, c, prob.grid.N),
             _BoundaryChannel(lay.gamma, psi.conjugate_function(), c, prob.grid.N))
    return Method.PROXIMAL if any(ch.type == PROX for ch in chans) else Method.QUASI_NEWTON


class _Stage(NamedTuple):
    eps: float
    lam: float
    phi: object
    psi: object
    method: Method
    smoothed: bool


def _stages(prob: Problem, method: Method, opts: SolverOptions):
    """The continuation stages; a single exact stage when nothing is smoothed.

    When the quasi-Newton method has to smooth a nonsmooth boundary term, a
    last proximal stage restores the exact boundary pair so that the final
    path meets hard boundary constraints exactly.
    """
    phi, psi = prob.phi, prob.boundary.psi
    need_phi = not (phi.smooth and phi.smooth_conjugate)
    need_psi = False
    if method is Method.QUASI_NEWTON:
        lay = layout(prob.kind)
        for ch, fn in ((lay.alpha, psi), (lay.gamma, psi.conjugate_function())):
            if _BoundaryChannel(ch, fn, 1.0, prob.grid.N).type == PROX:
                need_psi = True
    if not (need_phi or need_psi):
        return [_Stage(0.0, 0.0, phi, psi, method, False)]
    eps = list(opts.epsilon_schedule.values())
    lam = list(opts.lambda_schedule.values())
    n = max(len(eps), len(lam))
    eps += [eps[-1]] * (n - len(eps))
    lam += [lam[-1]] * (n - len(lam))
    stages = [_Stage(e, l, regularize_potential(phi, l, e) if need_phi else phi,
                     regularize(psi, l, e) if need_psi else psi, method, True)
              for e, l in zip(eps, lam)]
    if need_psi:
        last = stages[-1]
        stages.append(_Stage(last.eps, 0.0 if not need_phi else last.lam, last.phi, psi,
                             Method.PROXIMAL, False))
    return stages


def minimize(prob: Problem, opts: Optional[SolverOptions] = None,
             init: Optional[Path] = None) -> SolveReport:
    """Minimize the problem's functional; never raises on non-convergence.

    The objective reported, and used to pick the returned path, is always
    the functional of the original (unregularized) problem.
    """
    opts = opts or SolverOptions()
    method = choose_method(prob, opts)
    stages = _stages(prob, method, opts)
    if init is not None and init.grid != prob.grid:
        raise ContractError("initial path is not on the problem's grid")
    X0 = _default_init(prob) if init is None else np.asarray(init.nodes, dtype=float)

    z = None
    trace = []
    iterations = 0
    best = None
    settled = False
    for stage in stages:
        if stage.smoothed and settled:
            continue
        tr = _Transcription(prob, stage.phi, stage.psi)
        if z is None:
            z = _feasible_start(tr, X0)
        algo = _quasi_newton if stage.method is Method.QUASI_NEWTON else _proximal
        result = algo(tr, z, opts, int(opts.max_iterations))
        z = result.z
        iterations += result.iterations
        path = Path(prob.grid, tr.to_nodes(z))
        ev = evaluate(prob, path)
        if stage.smoothed and trace:
            # continuation stops once the original objective stabilizes
            settled = abs(trace[-1][2] - ev.value) <= 0.1 * opts.objective_tolerance
        trace.append((stage.eps, stage.lam, ev.value))
        if best is None or not ev.value > best[1].value:
            best = (path, ev, result)
    path, ev, result = best
    converged = bool(ev.value <= opts.objective_tolerance
                     and result.stationarity <= opts.gradient_tolerance)
    if not converged and math.isfinite(ev.value) and ev.value > opts.objective_tolerance:
        log.info("certificate gap %.3g stays above tolerance %.3g", ev.value,
                 opts.objective_tolerance)
    used = "+".join(dict.fromkeys(s.method.value for s in stages))
    return SolveReport(path, ev.value, ev.interval_residuals, ev.boundary_residual, iterations,
                       converged, trace, result.stationarity, used, result.message)


def _feasible_start(tr: _Transcription, X0):
    for X in (X0, np.zeros_like(X0)):
        z = tr.prox(1.0, tr.from_nodes(X))
        f, _ = tr.smooth(z)
        if math.isfinite(f) and math.isfinite(tr.nonsmooth_value(z)):
            return z
    raise SolverError("no feasible starting path: the boundary constraint cannot be met")


def functional_gradient(prob: Problem, p: Path):
    """Gradient of the functional with respect to the node values.

    Requires every term to be differentiable at ``p`` (smooth phi, phi* and
    boundary pair).
    """
    tr = _Transcription(prob, prob.phi, prob.boundary.psi)
    if not (prob.phi.smooth and prob.phi.smooth_conjugate and tr.both_smooth):
        raise ContractError("functional_gradient needs a smooth instance")
    z = tr.from_nodes(p.nodes)
    _, gz = tr.smooth(z)
    # nodes = A z with A invertible; dF/dx = A^{-T} dF/dz
    return _nodes_gradient(tr, gz)


def _nodes_gradient(tr, gz):
    d, N = tr.d, tr.N
    gb = gz[:d]
    gw = gz[d:].reshape(N, d)
    # gz = A' G; recover G from the structure of A'
    total = gb / tr.c
    after = gw / tr.sqrt_h + 0.5 * total  # after[j] = sum_{i > j} G_i
    G = np.empty((N + 1, d))
    G[N] = after[N - 1]
    G[1:N] = after[:-1] - after[1:]
    G[0] = total - after[0]
    return G


class Certificate(NamedTuple):
    passed: bool
    objective: float
    max_interval_residual: float
    location: int
    location_time: float
    boundary_residual: float
    tol: float

    def to_dict(self):
        return dict(self._asdict())


def certify(prob: Problem, p: Path, tol) -> Certificate:
    """Pass iff every interval residual is <= tol/T and the boundary residual <= tol.

    The interval budget makes ``sum_i h r_i <= tol``, so a passing path
    also has functional value at most ``2 tol``.
    """
    ev = evaluate(prob, p)
    r = ev.interval_residuals
    k = int(np.argmax(np.where(np.isnan(r), math.inf, r)))
    worst = float(r[k])
    ok = bool(worst <= tol / prob.grid.T and ev.boundary_residual <= tol)
    return Certificate(ok, ev.value, worst, k, float(prob.grid.midtimes[k]),
                       ev.boundary_residual, float(tol))


class Advisory(NamedTuple):
    status: str        # "pass", "warning" or "not_applicable"
    beta: float
    limit: float
    message: str


def resonance_guard(prob: Problem) -> Advisory:
    """Check the declared growth beta against the open bound pi/(2T)."""
    limit = math.pi / (2 * prob.grid.T)
    if not prob.hamiltonian:
        return Advisory("not_applicable", math.nan, limit, "gradient flows have no resonance bound")
    beta = prob.growth.beta
    if beta < limit:
        return Advisory("pass", beta, limit, f"beta={beta:.6g} < pi/(2T)={limit:.6g}")
    msg = (f"beta={beta:.6g} >= pi/(2T)={limit:.6g}: existence of a minimizer with zero "
           f"value is not guaranteed; a positive gap indicates non-attainment")
    log.warning(msg)
    return Advisory("warning", beta, limit, msg)
