import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from selfdual.errors import ContractError
from selfdual.paths import (Path, PathGrid, a2_norm, antiperiodic_sample, cross_term,
                            derivative, energy, l2_squared, read_csv, sup_norm_sq,
                            symplectic_cross_term, write_csv)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def node_arrays(N, d):
    return arrays(np.float64, (N + 1, d), elements=finite)


def test_grid_basics():
    g = PathGrid(2.0, 4, 3)
    assert g.h == 0.5
    assert np.allclose(g.times, [0, 0.5, 1, 1.5, 2])
    assert np.allclose(g.midtimes, [0.25, 0.75, 1.25, 1.75])
    for bad in ((1.0, 1), (0.0, 10), (-1.0, 10), (1.0, 10, 0)):
        with pytest.raises(ContractError):
            PathGrid(*bad)


def test_path_rejects_bad_nodes():
    g = PathGrid(1.0, 3, 1)
    with pytest.raises(ContractError):
        Path(g, [0.0, 1.0])
    with pytest.raises(ContractError):
        Path(g, [0.0, 1.0, math.inf, 0.0])
    p = Path(g, [0.0, 1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        p.nodes[0, 0] = 5.0


def test_derivative_examples():
    g = PathGrid(1.0, 5, 2)
    assert np.all(derivative(Path(g, np.ones((6, 2)))) == 0)
    assert np.allclose(derivative(Path(PathGrid(2.0, 2), [0.0, 1.0, 2.0]))[:, 0], [1, 1])
    g = PathGrid(1.0, 100)
    p = g.sample(lambda t: np.exp(-t))
    assert np.max(np.abs(derivative(p)[:, 0] + np.exp(-g.midtimes))) <= 1e-2


def test_a2_norm_examples():
    g = PathGrid(1.0, 10, 2)
    assert a2_norm(g.zeros()) == 0.0
    c = np.array([3.0, -4.0])
    assert a2_norm(Path(g, np.tile(c, (11, 1)))) == pytest.approx(5.0)
    lin = PathGrid(1.0, 10).sample(lambda t: t)
    assert a2_norm(lin) == pytest.approx(math.sqrt(1.25), abs=1e-14)


def test_cross_term_examples():
    # one linear segment, split in two because the grid needs N >= 2
    g = PathGrid(1.0, 2)
    p = Path(g, [1.0, 0.5 * (1.0 + math.exp(-1.0)), math.exp(-1.0)])
    assert cross_term(p) == pytest.approx(0.5 * math.exp(-2.0) - 0.5, abs=1e-15)
    assert cross_term(p) == pytest.approx(-0.43233235838169365, abs=1e-14)
    per = Path(PathGrid(1.0, 4), [1.0, 2.0, -1.0, 0.5, 1.0])
    assert cross_term(per) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(node_arrays(50, 3))
def test_cross_term_telescopes(X):
    p = Path(PathGrid(1.3, 50, 3), X)
    expected = 0.5 * X[-1] @ X[-1] - 0.5 * X[0] @ X[0]
    assert cross_term(p) == pytest.approx(expected, abs=1e-12 * max(1.0, np.sum(X * X)))


def test_symplectic_cross_term_examples():
    g = PathGrid(1.0, 10, 2)
    straight = g.sample(lambda t: np.stack([t, 0 * t], axis=1))
    assert symplectic_cross_term(straight) == pytest.approx(0.0, abs=1e-15)
    g = PathGrid(1.0, 2000, 2)
    rot = g.sample(lambda t: np.stack([np.cos(np.pi * t), np.sin(np.pi * t)], axis=1))
    assert symplectic_cross_term(rot) == pytest.approx(-math.pi, abs=2e-3)
    with pytest.raises(ContractError):
        symplectic_cross_term(PathGrid(1.0, 4, 3).zeros())


@settings(max_examples=50, deadline=None)
@given(node_arrays(20, 4), arrays(np.float64, 4, elements=finite), st.floats(-5, 5))
def test_symplectic_translation_invariance_and_scaling(X, c, s):
    g = PathGrid(0.8, 20, 4)
    base = symplectic_cross_term(Path(g, X))
    shifted = symplectic_cross_term(Path(g, X + c))
    scale = max(1.0, float(np.sum(X * X)), float(np.sum(c * c)) * len(X))
    assert shifted == pytest.approx(base, abs=1e-10 * scale)
    assert symplectic_cross_term(Path(g, s * X)) == pytest.approx(s * s * base,
                                                                 abs=1e-10 * scale * (1 + s * s))


@settings(max_examples=50, deadline=None)
@given(node_arrays(10, 2))
def test_a2_norm_zero_iff_zero_path(X):
    p = Path(PathGrid(1.0, 10, 2), X)
    assert (a2_norm(p) == 0.0) == bool(np.all(X == 0))


def test_antiperiodic_sample_examples():
    g = PathGrid(2.0, 50)
    p = antiperiodic_sample(g, [(1, [1.0])])
    assert np.allclose(p.nodes[:, 0], np.cos(np.pi * g.times / 2.0))
    assert p.x0[0] == 1.0 and p.xN[0] == -1.0
    assert np.all(antiperiodic_sample(g, []).nodes == 0)


def test_antiperiodic_parseval():
    T, N = 1.5, 1000
    g = PathGrid(T, N, 2)
    rng = np.random.default_rng(4)
    ks = [1, 2, 3, 4, 5]
    cs = [rng.standard_normal(2) + 1j * rng.standard_normal(2) for _ in ks]
    p = antiperiodic_sample(g, list(zip(ks, cs)))
    l2 = T / 2 * sum(np.sum(np.abs(c) ** 2) for c in cs)
    en = T / 2 * sum(((2 * k - 1) * np.pi / T) ** 2 * np.sum(np.abs(c) ** 2)
                     for k, c in zip(ks, cs))
    assert l2_squared(p) == pytest.approx(l2, rel=1e-4)
    assert energy(p) == pytest.approx(en, rel=1e-4)
    assert np.allclose(p.xN, -p.x0, rtol=0, atol=0)


def test_sup_norm_at_nodes():
    p = Path(PathGrid(1.0, 3, 2), [[0, 0], [1, 1], [-2, 0], [0, 0]])
    assert sup_norm_sq(p) == 4.0


def test_csv_round_trip(tmp_path):
    g = PathGrid(1.0, 7, 2)
    rng = np.random.default_rng(0)
    p = Path(g, rng.standard_normal((8, 2)) * 1e3)
    res = rng.random(7) * 1e-9
    fn = tmp_path / "traj.csv"
    write_csv(p, fn, res)
    lines = fn.read_text().splitlines()
    assert lines[0] == "t,x1,x2,residual"
    assert len(lines) == 9
    assert lines[-1].endswith(",")
    q, r = read_csv(fn)
    assert np.array_equal(q.nodes, p.nodes)
    assert np.array_equal(r, res)
    assert q.grid == g
