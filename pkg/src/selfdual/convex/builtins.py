"""Built-in convex functions with closed-form conjugates and proxes."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError
from .base import AffineSplit, ConvexFunction, numeric_prox, within


def _vector(v, dim, name):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = np.full(dim, float(a))
    if a.shape != (dim,):
        raise ContractError(f"{name} must have shape ({dim},), got {a.shape}")
    return a


def _matrix(A, dim=None):
    """Scalar -> a*I, 1-D -> diag, 2-D as is."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        if dim is None:
            raise ContractError("a scalar matrix needs an explicit dimension")
        return A * np.eye(dim)
    if A.ndim == 1:
        return np.diag(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"matrix must be square, got shape {A.shape}")
    return A


class Quadratic(ConvexFunction):
    """``f(x) = 1/2 x'Ax + b'x + c`` with A symmetric positive semidefinite.

    A singular ``A`` gives a conjugate that is finite only on ``b + range(A)``.
    """

    smooth = True

    def __init__(self, A, b=None, c=0.0, dim=None):
        if dim is None and np.ndim(A) == 0:
            dim = 1 if b is None or np.ndim(b) == 0 else len(b)
        A = _matrix(A, dim)
        d = A.shape[0]
        super().__init__(d)
        if not np.allclose(A, A.T, atol=1e-12, rtol=0):
            raise ContractError("quadratic matrix must be symmetric")
        A = 0.5 * (A + A.T)
        w, V = np.linalg.eigh(A)
        scale = max(1.0, float(np.max(np.abs(w))))
        if w[0] < -1e-12 * scale:
            raise ContractError(f"quadratic matrix is not PSD (min eigenvalue {w[0]:.3g})")
        self.A = A
        self.b = np.zeros(d) if b is None else _vector(b, d, "b")
        self.c = float(c)
        self._w = np.clip(w, 0.0, None)
        self._V = V
        pos = self._w > 1e-12 * scale
        self.smooth_conjugate = bool(np.all(pos))
        inv_w = np.where(pos, 1.0 / np.where(pos, self._w, 1.0), 0.0)
        self._Apinv = (V * inv_w) @ V.T
        null = V[:, ~pos]
        self._null = null @ null.T

    def _value(self, X):
        return 0.5 * np.einsum("ni,ij,nj->n", X, self.A, X) + X @ self.b + self.c

    def _hessian(self, X):
        return np.broadcast_to(self.A, (X.shape[0],) + self.A.shape)

    def _gradient(self, X):
        return X @ self.A + self.b

    def _conjugate(self, Y):
        R = Y - self.b
        out = 0.5 * np.sum((R @ self._Apinv) * R, axis=1) - self.c
        if not self.smooth_conjugate:
            off = np.linalg.norm(R @ self._null, axis=1)
            bad = ~within(off, np.linalg.norm(R, axis=1))
            out = np.where(bad, math.inf, out)
        return out

    def _conjugate_gradient(self, Y):
        return (Y - self.b) @ self._Apinv

    def _prox(self, lam, X):
        M = (self._V / (1.0 + lam * self._w)) @ self._V.T
        return (X - lam * self.b) @ M

    def _gap(self, X, Y):
        if not self.smooth_conjugate:
            return super()._gap(X, Y)
        # cancellation-free form 1/2 |Ax + b - y|^2 in the A^{-1} metric
        R = X @ self.A + self.b - Y
        return 0.5 * np.sum((R @ self._Apinv) * R, axis=1)

    def conjugate_function(self):
        if not self.smooth_conjugate:
            return super().conjugate_function()
        Ainv = self._Apinv
        return Quadratic(Ainv, -Ainv @ self.b, 0.5 * self.b @ Ainv @ self.b - self.c)

    def perturbed(self, eps):
        return Quadratic(self.A + eps * np.eye(self.dim), self.b, self.c)

    def __repr__(self):
        return f"Quadratic(dim={self.dim})"


class NormSquared(Quadratic):
    """``(scale/2) |x - center|^2``."""

    def __init__(self, dim, scale=1.0, center=None):
        scale = float(scale)
        if not scale > 0:
            raise ContractError("norm-squared scale must be positive")
        center = np.zeros(int(dim)) if center is None else _vector(center, int(dim), "center")
        super().__init__(scale * np.eye(int(dim)), -scale * center,
                         0.5 * scale * center @ center)
        self.scale = scale
        self.center = center

    def __repr__(self):
        return f"NormSquared(dim={self.dim}, scale={self.scale:g})"


class Zero(ConvexFunction):
    smooth = True

    def _value(self, X):
        return np.zeros(X.shape[0])

    def _gradient(self, X):
        return np.zeros_like(X)

    def _conjugate(self, Y):
        ok = within(np.max(np.abs(Y), axis=1), 0.0)
        return np.where(ok, 0.0, math.inf)

    def _conjugate_gradient(self, Y):
        return np.zeros_like(Y)

    def _prox(self, lam, X):
        return X.copy()

    def _gap(self, X, Y):
        ok = within(np.max(np.abs(Y), axis=1), 0.0)
        return np.where(ok, -np.sum(X * Y, axis=1), math.inf)

    def conjugate_function(self):
        return PointIndicator(np.zeros(self.dim))


class PointIndicator(ConvexFunction):
    """0 at ``point``, +inf elsewhere."""

    smooth_conjugate = True

    def __init__(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        super().__init__(point.size)
        self.point = point

    def _member(self, X):
        scale = max(1.0, float(np.max(np.abs(self.point))))
        return within(np.max(np.abs(X - self.point), axis=1), scale)

    def _value(self, X):
        return np.where(self._member(X), 0.0, math.inf)

    def _gradient(self, X):
        return np.zeros_like(X)

    def _conjugate(self, Y):
        return Y @ self.point

    def _conjugate_gradient(self, Y):
        return np.broadcast_to(self.point, Y.shape).copy()

    def _prox(self, lam, X):
        return np.broadcast_to(self.point, X.shape).copy()

    def _gap(self, X, Y):
        return np.where(self._member(X), np.sum((self.point - X) * Y, axis=1), math.inf)

    def conjugate_function(self):
        return Quadratic(np.zeros((self.dim, self.dim)), self.point)

    def affine_split(self):
        return AffineSplit(lambda X: np.broadcast_to(self.point, X.shape).copy(),
                           Zero(self.dim))

    def __repr__(self):
        return f"PointIndicator({self.point.tolist()})"


class BoxIndicator(ConvexFunction):
    """Indicator of ``{lower <= x <= upper}``; bounds may be infinite."""

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        lower, upper = np.broadcast_arrays(lower, upper)
        if np.any(lower > upper):
            raise ContractError("box lower bounds must not exceed upper bounds")
        super().__init__(lower.size)
        self.lower = lower.copy()
        self.upper = upper.copy()

    def _member(self, X):
        scale = np.maximum(1.0, np.abs(X))
        tol = 1e-12 * scale
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=1)

    def _value(self, X):
        return np.where(self._member(X), 0.0, math.inf)

    def _gradient(self, X):
        return np.zeros_like(X)

    def _conjugate(self, Y):
        with np.errstate(invalid="ignore"):
            terms = np.where(Y > 0, self.upper * Y, np.where(Y < 0, self.lower * Y, 0.0))
        return np.sum(terms, axis=1)

    def _conjugate_gradient(self, Y):
        mid = np.clip(0.0, self.lower, self.upper)
        return np.where(Y > 0, self.upper, np.where(Y < 0, self.lower, mid))

    def _prox(self, lam, X):
        return np.clip(X, self.lower, self.upper)

    def __repr__(self):
        return f"BoxIndicator({self.lower.tolist()}, {self.upper.tolist()})"


class BallIndicator(ConvexFunction):
    """Indicator of the closed Euclidean ball ``|x - center| <= radius``."""

    def __init__(self, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        super().__init__(center.size)
        if not radius >= 0:
            raise ContractError("ball radius must be nonnegative")
        self.center = center
        self.radius = float(radius)

    def _value(self, X):
        dist = np.linalg.norm(X - self.center, axis=1)
        ok = within(np.maximum(dist - self.radius, 0.0), np.linalg.norm(X, axis=1))
        return np.where(ok, 0.0, math.inf)

    def _gradient(self, X):
        return np.zeros_like(X)

    def _conjugate(self, Y):
        return Y @ self.center + self.radius * np.linalg.norm(Y, axis=1)

    def _conjugate_gradient(self, Y):
        n = np.linalg.norm(Y, axis=1, keepdims=True)
        unit = np.divide(Y, n, out=np.zeros_like(Y), where=n > 0)
        return self.center + self.radius * unit

    def _prox(self, lam, X):
        D = X - self.center
        n = np.linalg.norm(D, axis=1, keepdims=True)
        factor = np.minimum(1.0, np.divide(self.radius, n, out=np.ones_like(n), where=n > 0))
        return self.center + D * factor


class AffineIndicator(ConvexFunction):
    """Indicator of ``{x : M x = r}``."""

    def __init__(self, M, r):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if r.shape != (M.shape[0],):
            raise ContractError("affine constraint M x = r: row count mismatch")
        super().__init__(M.shape[1])
        Mp = np.linalg.pinv(M)
        self.M, self.r = M, r
        self.offset = Mp @ r
        if not np.allclose(M @ self.offset, r, atol=1e-10):
            raise ContractError("affine constraint M x = r is inconsistent")
        self._null = np.eye(self.dim) - Mp @ M

    def project(self, X):
        return self.offset + (X - self.offset) @ self._null

    def _value(self, X):
        dist = np.linalg.norm(X - self.project(X), axis=1)
        return np.where(within(dist, np.linalg.norm(X, axis=1)), 0.0, math.inf)

    def _gradient(self, X):
        return np.zeros_like(X)

    def _conjugate(self, Y):
        off = np.linalg.norm(Y @ self._null, axis=1)
        ok = within(off, np.linalg.norm(Y, axis=1))
        return np.where(ok, Y @ self.offset, math.inf)

    def _conjugate_gradient(self, Y):
        return np.broadcast_to(self.offset, Y.shape).copy()

    def _prox(self, lam, X):
        return self.project(X)

    def conjugate_function(self):
        return AffineSupport(self)

    def affine_split(self):
        return AffineSplit(self.project, Zero(self.dim))


class AffineSupport(ConvexFunction):
    """Support function of ``{M x = r}``: ``<x_p, y>`` on range(M'), +inf off it."""

    def __init__(self, indicator: AffineIndicator):
        super().__init__(indicator.dim)
        self.indicator = indicator
        self._range = np.eye(self.dim) - indicator._null

    def _value(self, X):
        return self.indicator._conjugate(X)

    def _gradient(self, X):
        return np.broadcast_to(self.indicator.offset, X.shape).copy()

    def _conjugate(self, Y):
        return self.indicator._value(Y)

    def _conjugate_gradient(self, Y):
        return np.zeros_like(Y)

    def _prox(self, lam, X):
        return (X - lam * self.indicator.offset) @ self._range

    def conjugate_function(self):
        return self.indicator

    def affine_split(self):
        linear = Quadratic(np.zeros((self.dim, self.dim)), self.indicator.offset)
        return AffineSplit(lambda X: X @ self._range, linear)


class L1Norm(ConvexFunction):
    """``scale * |x|_1``; its conjugate is the indicator of the box [-scale, scale]."""

    def __init__(self, dim, scale=1.0):
        super().__init__(dim)
        if not scale > 0:
            raise ContractError("l1 scale must be positive")
        self.scale = float(scale)

    def _value(self, X):
        return self.scale * np.sum(np.abs(X), axis=1)

    def _gradient(self, X):
        return self.scale * np.sign(X)

    def _conjugate(self, Y):
        excess = np.max(np.abs(Y), axis=1) - self.scale
        return np.where(within(np.maximum(excess, 0.0), self.scale), 0.0, math.inf)

    def _conjugate_gradient(self, Y):
        return np.zeros_like(Y)

    def _prox(self, lam, X):
        return np.sign(X) * np.maximum(np.abs(X) - lam * self.scale, 0.0)

    def conjugate_function(self):
        return BoxIndicator(-self.scale * np.ones(self.dim), self.scale * np.ones(self.dim))


class SeparableSum(ConvexFunction):
    """``f(x) = sum_k f_k(x[block_k])`` over consecutive coordinate blocks."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ContractError("separable sum needs at least one part")
        super().__init__(sum(p.dim for p in parts))
        self.parts = parts
        edges = np.cumsum([0] + [p.dim for p in parts])
        self._slices = [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
        self.smooth = all(p.smooth for p in parts)
        self.smooth_conjugate = all(p.smooth_conjugate for p in parts)
        self.has_closed_conjugate = all(p.has_closed_conjugate for p in parts)
        self.prox_exact = all(p.prox_exact for p in parts)

    def _sum(self, method, X):
        return sum(getattr(p, method)(X[:, s]) for p, s in zip(self.parts, self._slices))

    def _cat(self, method, X, *args):
        return np.concatenate([getattr(p, method)(*args, X[:, s])
                               for p, s in zip(self.parts, self._slices)], axis=1)

    def _value(self, X):
        return self._sum("_value", X)

    def _conjugate(self, Y):
        return self._sum("_conjugate", Y)

    def _gradient(self, X):
        return self._cat("_gradient", X)

    def _conjugate_gradient(self, Y):
        return self._cat("_conjugate_gradient", Y)

    def _prox(self, lam, X):
        return self._cat("_prox", X, lam)

    def _gap(self, X, Y):
        return sum(p._gap(X[:, s], Y[:, s]) for p, s in zip(self.parts, self._slices))

    def conjugate_function(self):
        return SeparableSum([p.conjugate_function() for p in self.parts])

    def affine_split(self):
        splits = []
        for p in self.parts:
            if p.smooth:
                splits.append(AffineSplit(lambda X: X, p))
                continue
            sp = p.affine_split()
            if sp is None:
                return None
            splits.append(sp)

        def project(X):
            return np.concatenate([sp.project(X[:, s]) for sp, s in zip(splits, self._slices)],
                                  axis=1)

        return AffineSplit(project, SeparableSum([sp.remainder for sp in splits]))


class NumericConvex(ConvexFunction):
    """A convex function given by callables; conjugate and prox are numeric.

    ``fn`` maps a point ``(d,)`` to a float (``inf`` allowed).  When a
    ``gradient`` callable is supplied the function is treated as smooth and
    conjugation uses Newton's method; otherwise a refined grid sup (d <= 3).
    """

    has_closed_conjugate = False
    prox_exact = False

    def __init__(self, fn, dim, gradient=None, hessian=None, strongly_convex=False):
        super().__init__(dim)
        self.fn = fn
        self._grad_fn = gradient
        self._hess_fn = hessian
        self.smooth = gradient is not None
        self.smooth_conjugate = bool(strongly_convex) and self.smooth
        if hessian is not None:
            self._hessian = lambda X: np.array([np.atleast_2d(hessian(x)) for x in X])

    def _value(self, X):
        return np.array([float(self.fn(x)) for x in X])

    def _gradient(self, X):
        if self._grad_fn is None:
            raise NotImplementedError("no gradient supplied")
        return np.array([np.atleast_1d(self._grad_fn(x)) for x in X], dtype=float)


class ConjugatePair(ConvexFunction):
    """Adapter for a user-supplied pair ``(f, f*)``.

    Optional callables provide gradients and the prox of ``f``; missing
    proxes are computed numerically.  Call :meth:`validate` to probe the pair
    with Fenchel-Young equality checks at prox points.
    """

    def __init__(self, fn, conjugate_fn, dim, gradient=None, conjugate_gradient=None,
                 prox=None, smooth=False, smooth_conjugate=False):
        super().__init__(dim)
        self.fn, self.conjugate_fn = fn, conjugate_fn
        self._grad_fn, self._cgrad_fn, self._prox_fn = gradient, conjugate_gradient, prox
        self.smooth = bool(smooth)
        self.smooth_conjugate = bool(smooth_conjugate)
        self.prox_exact = prox is not None

    def _value(self, X):
        return np.array([float(self.fn(x)) for x in X])

    def _conjugate(self, Y):
        return np.array([float(self.conjugate_fn(y)) for y in Y])

    def _gradient(self, X):
        if self._grad_fn is None:
            raise NotImplementedError("no gradient supplied")
        return np.array([np.atleast_1d(self._grad_fn(x)) for x in X], dtype=float)

    def _conjugate_gradient(self, Y):
        if self._cgrad_fn is None:
            raise NotImplementedError("no conjugate gradient supplied")
        return np.array([np.atleast_1d(self._cgrad_fn(y)) for y in Y], dtype=float)

    def _prox(self, lam, X):
        if self._prox_fn is not None:
            return np.array([np.atleast_1d(self._prox_fn(lam, x)) for x in X], dtype=float)
        return np.array([numeric_prox(self, lam, x) for x in X])

    def conjugate_function(self):
        prox = None
        if self._prox_fn is not None:
            # Moreau identity
            def prox(lam, y):
                return y - lam * np.atleast_1d(self._prox_fn(1.0 / lam, y / lam))
        return ConjugatePair(self.conjugate_fn, self.fn, self.dim,
                             gradient=self._cgrad_fn, conjugate_gradient=self._grad_fn,
                             prox=prox, smooth=self.smooth_conjugate,
                             smooth_conjugate=self.smooth)

    def validate(self, probes=20, lam=1.0, scale=3.0, seed=0, tol=1e-8):
        """Max Fenchel-Young equality defect at prox-generated points.

        Raises ContractError if a probe exceeds ``tol``.
        """
        rng = np.random.default_rng(seed)
        X = scale * rng.standard_normal((probes, self.dim))
        P = self._prox(lam, X)
        S = (X - P) / lam
        gap = self._gap(P, S)
        worst = float(np.max(np.abs(gap)))
        if not worst <= tol:
            raise ContractError(
                f"(f, f*) fail the Fenchel-Young equality probe: defect {worst:.3g}")
        return worst


class DeclaredConjugate(ConvexFunction):
    """``f`` paired with a separately supplied conjugate ``g = f*``.

    Values, gradients and the prox come from ``f``; conjugate values and
    gradients from ``g``.  Nothing checks the pairing here.
    """

    def __init__(self, f: ConvexFunction, g: ConvexFunction):
        if f.dim != g.dim:
            raise ContractError("declared conjugate has a different dimension")
        super().__init__(f.dim)
        self.f, self.g = f, g
        self.smooth = f.smooth
        self.smooth_conjugate = g.smooth
        self.prox_exact = f.prox_exact
        self.has_closed_conjugate = True

    def _value(self, X):
        return self.f._value(X)

    def _gradient(self, X):
        return self.f._gradient(X)

    def _conjugate(self, Y):
        return self.g._value(Y)

    def _conjugate_gradient(self, Y):
        return self.g._gradient(Y)

    def _prox(self, lam, X):
        return self.f._prox(lam, X)

    def conjugate_function(self):
        return DeclaredConjugate(self.g, self.f)

    def affine_split(self):
        return self.f.affine_split()
