"""Base class for convex functions on R^d and the numeric fallbacks.

Every method accepts either a single point of shape ``(d,)`` (a Python
scalar is accepted when ``d == 1``) or a batch of shape ``(n, d)``.  Scalar
results come back as ``float`` for single points and as ``(n,)`` arrays for
batches; vector results keep the input's leading shape.

``+inf`` is represented by ``math.inf`` and propagated through all
arithmetic; it is always produced explicitly by a membership test, never by
overflow.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from ..errors import ConjugateError, ContractError, ProxError

MEMBERSHIP_TOL = 1e-12

# numeric conjugate defaults
NEWTON_BRACKET = 1e3
GRID_POINTS = 101
GRID_REFINEMENTS = 5
GRID_WINDOW = 10          # refinement half-width, in cells of the previous pass
GRID_RADIUS = 10.0
GRID_MAX_RADIUS = 1e3


class Capabilities(NamedTuple):
    has_closed_conjugate: bool
    smooth: bool
    smooth_conjugate: bool
    prox_exact: bool


class AffineSplit(NamedTuple):
    """``f = remainder + indicator(S)`` with ``S`` affine.

    ``project`` maps a batch ``(n, d)`` to its Euclidean projection onto S.
    """

    project: Callable[[np.ndarray], np.ndarray]
    remainder: "ConvexFunction"


def within(dist, scale):
    return dist <= MEMBERSHIP_TOL * np.maximum(1.0, scale)


class ConvexFunction:
    """Proper convex lower semicontinuous function on R^d.

    Subclasses implement the batched hooks ``_value``, ``_gradient``,
    ``_conjugate``, ``_conjugate_gradient`` and ``_prox``.  The defaults for
    the last three fall back to numeric solvers, which is what a function
    without a closed-form conjugate gets.

    Flags
    -----
    smooth : finite and differentiable everywhere.
    smooth_conjugate : the conjugate is finite and differentiable everywhere.
    has_closed_conjugate : conjugate evaluation does not need a numeric sup.
    prox_exact : the proximal map is evaluated in closed form.
    """

    smooth = False
    smooth_conjugate = False
    has_closed_conjugate = True
    prox_exact = True

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ContractError(f"dimension must be positive, got {dim}")
        self.dim = dim

    # -- public API --------------------------------------------------------

    @property
    def capabilities(self):
        return Capabilities(self.has_closed_conjugate, self.smooth,
                            self.smooth_conjugate, self.prox_exact)

    def __call__(self, x):
        X, single = self._rows(x)
        return _pack_scalar(self._value(X), single)

    def conjugate(self, y):
        """``sup_x <x, y> - f(x)``; ``inf`` where the sup is unbounded."""
        Y, single = self._rows(y)
        return _pack_scalar(self._conjugate(Y), single)

    def gradient(self, x):
        """Gradient, or an element of the subdifferential."""
        X, single = self._rows(x)
        return _pack_vector(self._gradient(X), single)

    def conjugate_gradient(self, y):
        """A maximizer of ``<x, y> - f(x)``, i.e. an element of df*(y)."""
        Y, single = self._rows(y)
        return _pack_vector(self._conjugate_gradient(Y), single)

    def prox(self, lam, x):
        lam = _positive(lam, "lambda")
        X, single = self._rows(x)
        return _pack_vector(self._prox(lam, X), single)

    def moreau_envelope(self, lam, x):
        lam = _positive(lam, "lambda")
        X, single = self._rows(x)
        P = self._prox(lam, X)
        out = self._value(P) + np.sum((X - P) ** 2, axis=1) / (2 * lam)
        return _pack_scalar(out, single)

    def fenchel_young_gap(self, x, y):
        """``f(x) + f*(y) - <x, y>``, nonnegative, zero iff y in df(x)."""
        X, single = self._rows(x)
        Y, _ = self._rows(y)
        X, Y = np.broadcast_arrays(X, Y)
        return _pack_scalar(self._gap(X, Y), single)

    def conjugate_function(self):
        from .transforms import Conjugate
        return Conjugate(self)

    def affine_split(self):
        """Decomposition into smooth remainder plus affine-set indicator."""
        return None

    # -- hooks -------------------------------------------------------------

    def _value(self, X):
        raise NotImplementedError

    def _gradient(self, X):
        raise NotImplementedError(f"{type(self).__name__} has no gradient")

    def _conjugate(self, Y):
        return np.array([numeric_conjugate(self, y)[0] for y in Y])

    def _conjugate_gradient(self, Y):
        return np.array([numeric_conjugate(self, y)[1] for y in Y])

    def _prox(self, lam, X):
        return np.array([numeric_prox(self, lam, x) for x in X])

    def _gap(self, X, Y):
        fx = self._value(X)
        fy = self._conjugate(Y)
        with np.errstate(invalid="ignore"):
            out = fx + fy - np.sum(X * Y, axis=1)
        return np.where(np.isinf(fx) | np.isinf(fy), math.inf, out)

    # -- helpers -----------------------------------------------------------

    def _rows(self, x):
        a = np.asarray(x, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1)
        single = a.ndim == 1
        if single:
            a = a[None, :]
        if a.ndim != 2 or a.shape[1] != self.dim:
            raise ContractError(
                f"expected points of dimension {self.dim}, got shape {np.shape(x)}")
        return a, single

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _positive(value, name):
    value = float(value)
    if not value > 0:
        raise ContractError(f"{name} must be positive, got {value}")
    return value


def _pack_scalar(out, single):
    out = np.asarray(out, dtype=float)
    return float(out[0]) if single else out


def _pack_vector(out, single):
    out = np.asarray(out, dtype=float)
    return out[0] if single else out


# -- numeric fallbacks -----------------------------------------------------

def numeric_conjugate(f, y, bracket=NEWTON_BRACKET):
    """Return ``(f*(y), argmax)`` for a function without a closed form.

    Smooth functions use a safeguarded Newton solve of ``grad f(x) = y``;
    nonsmooth ones (d <= 3) a refined grid sup.
    """
    y = np.asarray(y, dtype=float)
    if f.smooth:
        if f.dim == 1:
            return _newton_1d(f, y, bracket)
        return _newton_nd(f, y)
    if f.dim > 3:
        raise ContractError(
            "numeric conjugation of a nonsmooth function needs d <= 3; "
            "supply a closed-form or user conjugate")

    def objective(X):
        with np.errstate(invalid="ignore"):
            vals = X @ y - f._value(X)
        return np.where(np.isnan(vals), -math.inf, vals)

    value, x = grid_sup(objective, f.dim)
    return value, x


def _newton_1d(f, y, R):
    # g(x) = f'(x) - y is nondecreasing; find its root in [-R, R]
    y0 = float(y[0])

    def g(x):
        return float(f._gradient(np.array([[x]]))[0, 0]) - y0

    def obj(x):
        return x * y0 - float(f._value(np.array([[x]]))[0])

    lo, hi = -R, R
    glo, ghi = g(lo), g(hi)
    if glo > 0 or ghi < 0:
        best = max(obj(lo), obj(hi))
        raise ConjugateError(
            f"conjugate sup not attained in [-{R:g}, {R:g}] at y={y0:g}",
            best_lower_bound=best, direction=np.array([-1.0 if glo > 0 else 1.0]))
    x = min(max(0.0, lo), hi)
    hess = getattr(f, "_hessian", None)
    for _ in range(200):
        gx = g(x)
        if abs(gx) <= 1e-13 * (1 + abs(y0)):
            break
        if gx < 0:
            lo = x
        else:
            hi = x
        if hess is not None:
            d2 = float(hess(np.array([[x]]))[0, 0, 0])
        else:
            step = 1e-6 * (1 + abs(x))
            d2 = (g(x + step) - g(x - step)) / (2 * step)
        xn = x - gx / d2 if d2 > 0 else math.nan
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 1e-15 * (1 + abs(x)):
            x = xn
            break
        x = xn
    else:
        raise ConjugateError("Newton conjugate solve did not converge",
                             best_lower_bound=obj(x))
    return obj(x), np.array([x])


def _newton_nd(f, y):
    from scipy.optimize import minimize

    def fun(x):
        return float(f._value(x[None])[0]) - x @ y

    def jac(x):
        return f._gradient(x[None])[0] - y

    res = minimize(fun, np.zeros(f.dim), jac=jac, method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 1000})
    x = res.x
    resid = np.linalg.norm(jac(x))
    if not np.isfinite(res.fun) or resid > 1e-8 * (1 + np.linalg.norm(y)):
        raise ConjugateError(
            f"conjugate solve did not converge (gradient residual {resid:.3g})",
            best_lower_bound=-float(res.fun))
    return -float(res.fun), x


def grid_sup(objective, dim, center=None, radius=GRID_RADIUS,
             points=GRID_POINTS, refinements=GRID_REFINEMENTS,
             max_radius=GRID_MAX_RADIUS):
    """Maximize a batched objective over a box grid with zoom refinement.

    The coarse grid grows by a factor 4 whenever the best point lies on its
    boundary; if it still escapes at ``max_radius`` a ConjugateError carrying
    the escaping direction is raised.  Each refinement pass re-grids
    +/- GRID_WINDOW cells around the incumbent; a wide window lets the
    search follow a curved constraint boundary away from the coarse lattice
    point that happened to lie closest to it.
    """
    center = np.zeros(dim) if center is None else np.asarray(center, float)
    R = float(radius)
    while True:
        val, x, on_edge = _grid_pass(objective, center, R, points)
        if not on_edge:
            break
        if R >= max_radius:
            direction = x - center
            n = np.linalg.norm(direction)
            raise ConjugateError(
                "grid sup escapes to infinity (non-coercive objective)",
                best_lower_bound=val,
                direction=direction / n if n > 0 else direction)
        R *= 4.0
    for _ in range(refinements):
        cell = 2 * R / (points - 1)
        R = GRID_WINDOW * cell
        v2, x2, _ = _grid_pass(objective, x, R, points)
        if v2 >= val:
            val, x = v2, x2
    return float(val), x


def _grid_pass(objective, center, R, points):
    dim = center.size
    axis = np.linspace(-R, R, points)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    X = center + offsets
    vals = objective(X)
    k = int(np.argmax(vals))
    val = vals[k]
    if not np.isfinite(val):
        raise ConjugateError("objective is -inf on the whole grid",
                             best_lower_bound=-math.inf)
    on_edge = bool(np.any(np.isclose(np.abs(offsets[k]), R)))
    return float(val), X[k].copy(), on_edge


def numeric_prox(f, lam, x):
    from scipy.optimize import minimize

    x = np.asarray(x, dtype=float)
    if f.smooth:
        def fun(p):
            return float(f._value(p[None])[0]) + np.sum((p - x) ** 2) / (2 * lam)

        def jac(p):
            return f._gradient(p[None])[0] + (p - x) / lam

        res = minimize(fun, x.copy(), jac=jac, method="BFGS",
                       options={"gtol": 1e-12, "maxiter": 2000})
        resid = float(np.linalg.norm(jac(res.x)))
        if resid > 1e-8 * (1 + np.linalg.norm(x)):
            raise ProxError(f"prox solve stalled (optimality residual {resid:.3g})",
                            residual=resid)
        return res.x

    def fun(p):
        v = float(f._value(p[None])[0])
        return 1e300 if not np.isfinite(v) else v + np.sum((p - x) ** 2) / (2 * lam)

    res = minimize(fun, x.copy(), method="Powell",
                   options={"xtol": 1e-12, "ftol": 1e-14, "maxiter": 20000})
    if not res.success or res.fun >= 1e300:
        raise ProxError(f"prox solve failed: {res.message}",
                        residual=float("nan"))
    return res.x
