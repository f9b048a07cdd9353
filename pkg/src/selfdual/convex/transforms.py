"""Wrappers that build new convex functions from old ones."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .base import AffineSplit, ConvexFunction


class Conjugate(ConvexFunction):
    """``f*`` as a function in its own right; its conjugate is ``f`` again."""

    def __init__(self, f: ConvexFunction):
        super().__init__(f.dim)
        self.f = f
        self.smooth = f.smooth_conjugate
        self.smooth_conjugate = f.smooth
        self.has_closed_conjugate = f.has_closed_conjugate
        self.prox_exact = f.prox_exact

    def _value(self, X):
        return self.f._conjugate(X)

    def _conjugate(self, Y):
        return self.f._value(Y)

    def _gradient(self, X):
        return self.f._conjugate_gradient(X)

    def _conjugate_gradient(self, Y):
        return self.f._gradient(Y)

    def _prox(self, lam, X):
        # Moreau decomposition
        return X - lam * self.f._prox(1.0 / lam, X / lam)

    def _gap(self, X, Y):
        return self.f._gap(Y, X)

    def conjugate_function(self):
        return self.f

    def __repr__(self):
        return f"Conjugate({self.f!r})"


class Tilted(ConvexFunction):
    """``f(x) + <g, x>``."""

    def __init__(self, f: ConvexFunction, g):
        super().__init__(f.dim)
        g = np.asarray(g, dtype=float)
        if g.shape != (f.dim,):
            raise ContractError(f"tilt must have shape ({f.dim},)")
        self.f, self.g = f, g
        self.smooth = f.smooth
        self.smooth_conjugate = f.smooth_conjugate
        self.has_closed_conjugate = f.has_closed_conjugate
        self.prox_exact = f.prox_exact

    def _value(self, X):
        return self.f._value(X) + X @ self.g

    def _gradient(self, X):
        return self.f._gradient(X) + self.g

    def _conjugate(self, Y):
        return self.f._conjugate(Y - self.g)

    def _conjugate_gradient(self, Y):
        return self.f._conjugate_gradient(Y - self.g)

    def _prox(self, lam, X):
        return self.f._prox(lam, X - lam * self.g)

    def _gap(self, X, Y):
        return self.f._gap(X, Y - self.g)

    def affine_split(self):
        sp = self.f.affine_split()
        if sp is None:
            return None
        return AffineSplit(sp.project, Tilted(sp.remainder, self.g))


class Scaled(ConvexFunction):
    """``c * f(x)`` for ``c > 0``; the conjugate is ``c f*(y / c)``."""

    def __init__(self, f: ConvexFunction, c):
        super().__init__(f.dim)
        if not c > 0:
            raise ContractError("scale factor must be positive")
        self.f, self.c = f, float(c)
        self.smooth = f.smooth
        self.smooth_conjugate = f.smooth_conjugate
        self.has_closed_conjugate = f.has_closed_conjugate
        self.prox_exact = f.prox_exact

    def _value(self, X):
        return self.c * self.f._value(X)

    def _gradient(self, X):
        return self.c * self.f._gradient(X)

    def _conjugate(self, Y):
        return self.c * self.f._conjugate(Y / self.c)

    def _conjugate_gradient(self, Y):
        return self.f._conjugate_gradient(Y / self.c)

    def _prox(self, lam, X):
        return self.f._prox(lam * self.c, X)

    def _gap(self, X, Y):
        return self.c * self.f._gap(X, Y / self.c)


class Perturbed(ConvexFunction):
    """``f(x) + (eps/2)|x|^2``; its conjugate is the Moreau envelope of f*."""

    has_closed_conjugate = True
    smooth_conjugate = True

    def __init__(self, f: ConvexFunction, eps):
        super().__init__(f.dim)
        if not eps > 0:
            raise ContractError("perturbation eps must be positive")
        self.f, self.eps = f, float(eps)
        self.smooth = f.smooth
        self.prox_exact = f.prox_exact

    def _value(self, X):
        return self.f._value(X) + 0.5 * self.eps * np.sum(X * X, axis=1)

    def _gradient(self, X):
        return self.f._gradient(X) + self.eps * X

    def _conjugate_gradient(self, Y):
        # maximizer x solves y - eps x in df(x), i.e. x = prox_{f/eps}(y/eps)
        return self.f._prox(1.0 / self.eps, Y / self.eps)

    def _conjugate(self, Y):
        P = self._conjugate_gradient(Y)
        return np.sum(P * Y, axis=1) - self._value(P)

    def _prox(self, lam, X):
        s = 1.0 + lam * self.eps
        return self.f._prox(lam / s, X / s)

    def conjugate_function(self):
        return MoreauEnvelope(self.f.conjugate_function(), self.eps)

    def __repr__(self):
        return f"Perturbed({self.f!r}, eps={self.eps:g})"


class MoreauEnvelope(ConvexFunction):
    """``f_lam(x) = inf_y f(y) + |x - y|^2 / (2 lam)``."""

    smooth = True

    def __init__(self, f: ConvexFunction, lam):
        super().__init__(f.dim)
        if not lam > 0:
            raise ContractError("Moreau parameter lambda must be positive")
        self.f, self.lam = f, float(lam)
        self.smooth_conjugate = f.smooth_conjugate
        self.has_closed_conjugate = f.has_closed_conjugate
        self.prox_exact = f.prox_exact

    def _value(self, X):
        P = self.f._prox(self.lam, X)
        return self.f._value(P) + np.sum((X - P) ** 2, axis=1) / (2 * self.lam)

    def _gradient(self, X):
        return (X - self.f._prox(self.lam, X)) / self.lam

    def _conjugate(self, Y):
        return self.f._conjugate(Y) + 0.5 * self.lam * np.sum(Y * Y, axis=1)

    def _conjugate_gradient(self, Y):
        return self.f._conjugate_gradient(Y) + self.lam * Y

    def _prox(self, lam, X):
        t = self.lam + lam
        return X + (lam / t) * (self.f._prox(t, X) - X)

    def conjugate_function(self):
        return Perturbed(self.f.conjugate_function(), self.lam)

    def __repr__(self):
        return f"MoreauEnvelope({self.f!r}, lam={self.lam:g})"


def perturb(f: ConvexFunction, eps):
    """``f + (eps/2)|.|^2``, staying in closed form where possible."""
    from .builtins import NormSquared, Quadratic, Zero

    if isinstance(f, Zero):
        return NormSquared(f.dim, eps)
    if isinstance(f, Quadratic):
        return f.perturbed(eps)
    if isinstance(f, Tilted):
        return Tilted(perturb(f.f, eps), f.g)
    return Perturbed(f, eps)


def regularize(f: ConvexFunction, lam, eps):
    """Make ``f`` and its conjugate both smooth.

    A nonsmooth ``f`` is replaced by its Moreau envelope with parameter
    ``lam``; a nonsmooth conjugate is fixed by adding ``(eps/2)|x|^2``.  Both
    operations map a conjugate pair to a conjugate pair.
    """
    if not f.smooth:
        f = MoreauEnvelope(f, lam)
    if not f.smooth_conjugate:
        f = perturb(f, eps)
    return f
