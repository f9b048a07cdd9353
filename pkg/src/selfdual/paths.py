"""Uniform time grids and piecewise-linear paths.

A path is stored by its node values ``x_0, ..., x_N``.  Between nodes
it is linear, so the derivative is constant per interval and every
integrand is evaluated at the interval midpoint.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class PathGrid:
    T: float
    N: int
    d: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ContractError(f"horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 2:
            raise ContractError(f"grid needs N >= 2 intervals, got {self.N}")
        if int(self.d) != self.d or self.d < 1:
            raise ContractError(f"state dimension must be positive, got {self.d}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "d", int(self.d))

    @property
    def h(self):
        return self.T / self.N

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def midtimes(self):
        return (np.arange(self.N) + 0.5) * self.h

    def zeros(self):
        return Path(self, np.zeros((self.N + 1, self.d)))

    def sample(self, fn):
        """Path with nodes ``fn(t_i)``; fn may be vectorized or pointwise."""
        ts = self.times
        try:
            vals = np.asarray(fn(ts), dtype=float)
            if vals.shape[0] != len(ts):
                raise ValueError
        except (TypeError, ValueError):
            vals = np.array([np.atleast_1d(fn(t)) for t in ts], dtype=float)
        return Path(self, vals)


class Path:
    """Piecewise-linear path on a PathGrid."""

    def __init__(self, grid: PathGrid, nodes):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim == 1 and grid.d == 1:
            nodes = nodes[:, None]
        if nodes.shape != (grid.N + 1, grid.d):
            raise ContractError(
                f"path needs nodes of shape ({grid.N + 1}, {grid.d}), got {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise ContractError("path nodes must be finite")
        nodes.setflags(write=False)
        self.grid = grid
        self.nodes = nodes

    @property
    def x0(self):
        return self.nodes[0]

    @property
    def xN(self):
        return self.nodes[-1]

    def __repr__(self):
        g = self.grid
        return f"Path(T={g.T:g}, N={g.N}, d={g.d})"


def derivative(p: Path):
    return np.diff(p.nodes, axis=0) / p.grid.h


def midpoints(p: Path):
    return 0.5 * (p.nodes[:-1] + p.nodes[1:])


def energy(p: Path):
    """``int |x'|^2 dt``, exact for the piecewise-linear path."""
    v = derivative(p)
    return float(p.grid.h * np.sum(v * v))


def l2_squared(p: Path):
    """``int |x|^2 dt``, exact for the piecewise-linear path."""
    a, b = p.nodes[:-1], p.nodes[1:]
    return float(p.grid.h / 3.0 * np.sum(a * a + a * b + b * b))


def sup_norm_sq(p: Path):
    # a piecewise-linear path attains its max modulus at a node
    return float(np.max(np.sum(p.nodes ** 2, axis=1)))


def a2_norm(p: Path):
    # scaled so tiny or huge paths neither underflow nor overflow
    s = float(np.max(np.abs(p.nodes)))
    if s == 0.0:
        return 0.0
    X = p.nodes / s
    mean = 0.5 * (X[0] + X[-1])
    v = np.diff(X, axis=0) / p.grid.h
    return s * math.sqrt(float(mean @ mean) + p.grid.h * float(np.sum(v * v)))


def cross_term(p: Path):
    """``sum_i <m_i, x_{i+1} - x_i>``; telescopes to (|x_N|^2 - |x_0|^2)/2."""
    dx = np.diff(p.nodes, axis=0)
    return float(np.sum(midpoints(p) * dx))


def apply_J(X):
    """``J(p, q) = (-q, p)`` on the last axis, whose length must be even."""
    X = np.asarray(X, dtype=float)
    d = X.shape[-1]
    if d % 2:
        raise ContractError(f"symplectic structure needs even dimension, got {d}")
    n = d // 2
    return np.concatenate([-X[..., n:], X[..., :n]], axis=-1)


def symplectic_cross_term(p: Path):
    """``sum_i h <J v_i, m_i> + <J (x_0 + x_N)/2, x_N - x_0>``."""
    if p.grid.d % 2:
        raise ContractError(f"symplectic cross term needs even d, got {p.grid.d}")
    mid = midpoints(p)
    interior = float(np.sum(apply_J(np.diff(p.nodes, axis=0)) * mid))
    boundary = float(apply_J(0.5 * (p.x0 + p.xN)) @ (p.xN - p.x0))
    return interior + boundary


def antiperiodic_sample(grid: PathGrid, coefficients):
    """Real part of ``sum_k c_k exp(i (2k - 1) pi t / T)`` at the grid nodes.

    ``coefficients`` is a list of ``(k, c_k)`` with ``c_k`` a (possibly
    complex) vector of length d.  The last node is set to ``-x_0`` so the
    anti-periodicity holds exactly.
    """
    ts = grid.times
    X = np.zeros((grid.N + 1, grid.d))
    for k, c in coefficients:
        c = np.atleast_1d(np.asarray(c, dtype=complex))
        if c.shape != (grid.d,):
            raise ContractError(f"coefficient for mode {k} must have length {grid.d}")
        phase = np.exp(1j * (2 * int(k) - 1) * np.pi * ts / grid.T)
        X += np.real(phase[:, None] * c[None, :])
    X[-1] = -X[0]
    return Path(grid, X)


# -- CSV -------------------------------------------------------------------

def write_csv(p: Path, filename, residuals=None):
    """Write ``t,x1..xd,residual``; the last row's residual is empty.

    The file is written to a temporary sibling then renamed, so a reader
    never sees a partial file.
    """
    g = p.grid
    if residuals is not None:
        residuals = np.asarray(residuals, dtype=float)
        if residuals.shape != (g.N,):
            raise ContractError(f"need {g.N} interval residuals, got {residuals.shape}")
    header = ["t"] + [f"x{k + 1}" for k in range(g.d)] + ["residual"]
    directory = os.path.dirname(os.path.abspath(filename))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".traj-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(g.times):
                r = "" if residuals is None or i == g.N else "%.17g" % residuals[i]
                w.writerow(["%.17g" % t] + ["%.17g" % v for v in p.nodes[i]] + [r])
        os.replace(tmp, filename)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(filename):
    """Inverse of write_csv: returns ``(path, residuals or None)``."""
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t" or len(body) < 3:
        raise ContractError(f"{filename}: not a trajectory file")
    has_res = header[-1] == "residual"
    d = len(header) - 1 - int(has_res)
    ts = np.array([float(r[0]) for r in body])
    X = np.array([[float(v) for v in r[1:1 + d]] for r in body])
    N = len(body) - 1
    grid = PathGrid(float(ts[-1]), N, d)
    if not np.allclose(ts, grid.times, rtol=0, atol=1e-12 * max(1.0, grid.T)):
        raise ContractError(f"{filename}: times are not a uniform grid")
    res = None
    if has_res and all(r[-1] != "" for r in body[:-1]):
        res = np.array([float(r[-1]) for r in body[:-1]])
    return Path(grid, X), res
