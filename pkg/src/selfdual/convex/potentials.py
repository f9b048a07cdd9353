"""Time-dependent convex potentials ``phi(t, x)`` and forcing terms.

The batched methods take ``ts`` of shape ``(n,)`` and points of shape
``(n, d)``, one time per row.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .base import ConvexFunction
from .transforms import perturb, regularize

log = logging.getLogger(__name__)


class TimeConvexFunction:
    """A map ``t -> phi(t, .)`` into convex functions of fixed dimension."""

    smooth = False
    smooth_conjugate = False
    time_independent = False

    def __init__(self, dim, horizon=None):
        self.dim = int(dim)
        self.horizon = None if horizon is None else float(horizon)

    def at(self, t) -> ConvexFunction:
        raise NotImplementedError

    # batched evaluation; subclasses override the ones they can vectorize
    def value(self, ts, X):
        return self._by_time("_value", ts, X)

    def gradient(self, ts, X):
        return self._by_time("_gradient", ts, X)

    def conjugate(self, ts, Y):
        return self._by_time("_conjugate", ts, Y)

    def conjugate_gradient(self, ts, Y):
        return self._by_time("_conjugate_gradient", ts, Y)

    def gap(self, ts, X, Y):
        ts = np.asarray(ts, dtype=float)
        out = np.empty(len(ts))
        for t, rows in _group(ts):
            out[rows] = self.at(t)._gap(X[rows], Y[rows])
        return out

    def _by_time(self, method, ts, X):
        ts = np.asarray(ts, dtype=float)
        X = np.asarray(X, dtype=float)
        out = None
        for t, rows in _group(ts):
            part = getattr(self.at(t), method)(X[rows])
            if out is None:
                out = np.empty((len(ts),) + part.shape[1:])
            out[rows] = part
        return out

    def map(self, transform):
        """Apply ``transform`` to every time slice."""
        return Sampled(lambda t: transform(self.at(t)), self.dim, self.horizon)


def _batched(method):
    """Coerce ``ts`` and point arrays before a vectorized override runs."""
    @functools.wraps(method)
    def wrapper(self, ts, *arrays):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return method(self, ts, *(np.atleast_2d(np.asarray(a, dtype=float)) for a in arrays))
    return wrapper


def _group(ts):
    uniq, inverse = np.unique(ts, return_inverse=True)
    for k, t in enumerate(uniq):
        yield float(t), np.flatnonzero(inverse == k)


class Static(TimeConvexFunction):
    """A potential that does not depend on t."""

    time_independent = True

    def __init__(self, f: ConvexFunction, horizon=None):
        super().__init__(f.dim, horizon)
        self.f = f
        self.smooth = f.smooth
        self.smooth_conjugate = f.smooth_conjugate

    def at(self, t):
        return self.f

    @_batched
    def value(self, ts, X):
        return self.f._value(X)

    @_batched
    def gradient(self, ts, X):
        return self.f._gradient(X)

    @_batched
    def conjugate(self, ts, Y):
        return self.f._conjugate(Y)

    @_batched
    def conjugate_gradient(self, ts, Y):
        return self.f._conjugate_gradient(Y)

    @_batched
    def gap(self, ts, X, Y):
        return self.f._gap(X, Y)

    def map(self, transform):
        return Static(transform(self.f), self.horizon)

    def __repr__(self):
        return f"Static({self.f!r})"


class Forced(TimeConvexFunction):
    """``phi(t, x) = base(x) + <F(t), x>`` with a forcing ``F``."""

    def __init__(self, base: ConvexFunction, forcing, horizon=None):
        super().__init__(base.dim, horizon)
        if forcing.dim != base.dim:
            raise ContractError(
                f"forcing dimension {forcing.dim} does not match potential dimension {base.dim}")
        self.base, self.forcing = base, forcing
        self.smooth = base.smooth
        self.smooth_conjugate = base.smooth_conjugate

    def at(self, t):
        from .transforms import Tilted
        return Tilted(self.base, self.forcing(np.array([t]))[0])

    @_batched
    def value(self, ts, X):
        return self.base._value(X) + np.sum(self.forcing(ts) * X, axis=1)

    @_batched
    def gradient(self, ts, X):
        return self.base._gradient(X) + self.forcing(ts)

    @_batched
    def conjugate(self, ts, Y):
        return self.base._conjugate(Y - self.forcing(ts))

    @_batched
    def conjugate_gradient(self, ts, Y):
        return self.base._conjugate_gradient(Y - self.forcing(ts))

    @_batched
    def gap(self, ts, X, Y):
        return self.base._gap(X, Y - self.forcing(ts))

    def map(self, transform):
        return Forced(transform(self.base), self.forcing, self.horizon)

    def __repr__(self):
        return f"Forced({self.base!r}, {self.forcing!r})"


class Sampled(TimeConvexFunction):
    """General ``t -> ConvexFunction`` given by a callable; slices are cached."""

    def __init__(self, sampler, dim, horizon=None, smooth=None, smooth_conjugate=None):
        super().__init__(dim, horizon)
        self.sampler = sampler
        self._cache = {}
        probe = self.at(0.0)
        self.smooth = probe.smooth if smooth is None else bool(smooth)
        self.smooth_conjugate = (probe.smooth_conjugate if smooth_conjugate is None
                                 else bool(smooth_conjugate))

    def at(self, t):
        t = float(t)
        f = self._cache.get(t)
        if f is None:
            f = self.sampler(t)
            if f.dim != self.dim:
                raise ContractError(
                    f"potential slice at t={t:g} has dimension {f.dim}, expected {self.dim}")
            self._cache[t] = f
        return f


# -- forcing terms ---------------------------------------------------------

class ConstantForcing:
    def __init__(self, value):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self.dim = self.value.size

    def __call__(self, ts):
        return np.broadcast_to(self.value, (len(np.atleast_1d(ts)), self.dim)).copy()

    def __repr__(self):
        return f"ConstantForcing({self.value.tolist()})"


class SinusoidForcing:
    """``F(t) = amplitude * sin(2 pi frequency t + phase)`` per component."""

    def __init__(self, amplitude, frequency, phase=0.0):
        a = np.atleast_1d(np.asarray(amplitude, dtype=float))
        self.amplitude = a
        self.frequency = np.broadcast_to(np.asarray(frequency, dtype=float), a.shape).copy()
        self.phase = np.broadcast_to(np.asarray(phase, dtype=float), a.shape).copy()
        self.dim = a.size

    def __call__(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))[:, None]
        return self.amplitude * np.sin(2 * np.pi * self.frequency * ts + self.phase)

    def __repr__(self):
        return f"SinusoidForcing({self.amplitude.tolist()}, {self.frequency.tolist()})"


class TableForcing:
    """Piecewise-linear interpolation of forcing values sampled at ``times``."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) < 2 or values.shape[0] != len(times):
            raise ContractError("forcing table needs >= 2 times and one row per time")
        if np.any(np.diff(times) <= 0):
            raise ContractError("forcing table times must be strictly increasing")
        self.times, self.values = times, values
        self.dim = values.shape[1]

    def __call__(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return np.stack([np.interp(ts, self.times, self.values[:, k])
                         for k in range(self.dim)], axis=1)


# -- regularization --------------------------------------------------------

def epsilon_perturb(phi: TimeConvexFunction, eps) -> TimeConvexFunction:
    """``t -> phi(t, .) + (eps/2)|.|^2``; the result has a finite conjugate."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    return phi.map(lambda f: perturb(f, eps))


def regularize_potential(phi: TimeConvexFunction, lam, eps) -> TimeConvexFunction:
    """Smooth both ``phi`` and ``phi*`` where needed (see ``regularize``)."""
    if phi.smooth and phi.smooth_conjugate:
        return phi
    return phi.map(lambda f: regularize(f, lam, eps))


@dataclass(frozen=True)
class GrowthBounds:
    """Declared bounds ``-alpha_bar <= phi(t, u) <= (beta/2)|u|^2 + gamma_bar``."""

    beta: float
    alpha_bar: float = 0.0
    gamma_bar: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ContractError("growth beta must be positive")
        if self.alpha_bar < 0 or self.gamma_bar < 0:
            raise ContractError("growth offsets alpha_bar, gamma_bar must be nonnegative")


def check_growth(phi: TimeConvexFunction, growth: GrowthBounds, T, samples=200,
                 scale=3.0, seed=0):
    """Sampled check of the declared growth bounds.

    Returns ``(ok, worst_violation)`` where the violation is the largest
    amount by which either bound fails (<= 0 when all samples pass).
    """
    rng = np.random.default_rng(seed)
    ts = rng.uniform(0.0, T, samples)
    U = scale * rng.standard_normal((samples, phi.dim))
    vals = phi.value(ts, U)
    upper = 0.5 * growth.beta * np.sum(U * U, axis=1) + growth.gamma_bar
    with np.errstate(invalid="ignore"):
        viol = np.maximum(vals - upper, -growth.alpha_bar - vals)
    viol = np.where(np.isnan(viol), math.inf, viol)
    worst = float(np.max(viol))
    return worst <= 1e-10, worst


def hamiltonian_of_lagrangian(phi: TimeConvexFunction, t, x, y):
    """``sup_p <y, p> - phi(t, x) - phi*(t, -p)``, which equals phi(t, -y) - phi(t, x).

    Returns ``-inf`` (with a logged warning) where ``phi(t, x)`` is infinite.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ts = np.array([float(t)])
    fx = float(phi.value(ts, x[None])[0])
    if math.isinf(fx):
        log.warning("phi(t, x) is +inf at t=%g; Hamiltonian is -inf there", float(t))
        return -math.inf
    return float(phi.value(ts, -y[None])[0]) - fx
