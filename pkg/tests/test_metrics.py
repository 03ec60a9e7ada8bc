import numpy as np
import pytest
from hypothesis import given, strategies as st

from bidifac.linked import BlockGrid, default_penalties
from bidifac.metrics import (
    format_variance_table,
    impute_err,
    mean_rel_error,
    pred_err,
    r_squared,
    residual_diagnostics,
    swiss,
    variance_table,
)
from bidifac.solver import Decomposition, SolverConfig, fit


def test_r_squared_examples(rng):
    x = rng.standard_normal((5, 4))
    assert r_squared(x, x) == 1.0
    assert r_squared(x, np.zeros_like(x)) == 0.0
    with pytest.raises(ValueError):
        r_squared(np.zeros((2, 2)), np.zeros((2, 2)))


def test_r_squared_identity(rng):
    x, s = rng.standard_normal((2, 6, 5))
    assert r_squared(x, s) + np.sum((x - s) ** 2) / np.sum(x * x) == pytest.approx(1.0, abs=1e-15)


def test_r_squared_not_additive():
    # X = A + B with estimates that overlap: the R^2 of the sum differs from the sum of R^2
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[0.0, 0.0], [0.0, 1.0]])
    x = a + b
    est_a = np.array([[1.0, 0.0], [0.0, 0.5]])
    est_b = np.array([[0.5, 0.0], [0.0, 1.0]])
    assert abs(r_squared(x, est_a + est_b) - (r_squared(x, est_a) + r_squared(x, est_b))) > 0.1


def test_pred_err_examples(rng):
    t = [[rng.standard_normal((3, 4)) for _ in range(2)] for _ in range(2)]
    assert pred_err(t, t) == 0.0
    assert pred_err(t, [[np.zeros((3, 4))] * 2] * 2) == pytest.approx(1.0)
    e = [[b + 0.1 * rng.standard_normal(b.shape) for b in row] for row in t]
    c = 3.7
    scaled = pred_err([[c * b for b in row] for row in t], [[c * b for b in row] for row in e])
    assert scaled == pytest.approx(pred_err(t, e))


def test_pred_err_undefined():
    z = [np.zeros((2, 2))]
    assert pred_err(z, z) is None
    with pytest.raises(ValueError):
        pred_err([np.zeros((2, 2))], [np.zeros((3, 2))])


def test_impute_err_examples(rng):
    t = rng.standard_normal((6, 6))
    m = rng.uniform(size=(6, 6)) < 0.3
    assert impute_err([t], [t], [m]) == 0.0
    assert impute_err([t], [np.zeros_like(t)], [m]) == pytest.approx(1.0)
    e = t + rng.standard_normal(t.shape)
    assert impute_err([t], [e], [np.ones_like(m)]) == pytest.approx(pred_err([t], [e]))
    with pytest.raises(ValueError):
        impute_err([t], [e], [np.zeros_like(m)])


@given(st.integers(0, 10_000))
def test_errors_rotation_invariant(seed):
    r = np.random.default_rng(seed)
    t, e = r.standard_normal((2, 5, 4))
    q1, _ = np.linalg.qr(r.standard_normal((5, 5)))
    q2, _ = np.linalg.qr(r.standard_normal((4, 4)))
    assert pred_err([q1 @ t @ q2], [q1 @ e @ q2]) == pytest.approx(pred_err([t], [e]), rel=1e-10)
    m = np.ones((5, 4), dtype=bool)
    assert impute_err([q1 @ t @ q2], [q1 @ e @ q2], [m]) == pytest.approx(impute_err([t], [e], [m]), rel=1e-10)


def test_mean_rel_error(rng):
    comps = [rng.standard_normal((3, 3)) for _ in range(4)]
    assert mean_rel_error(comps, comps) == 0.0
    assert mean_rel_error(comps, [np.zeros((3, 3))] * 4) == pytest.approx(1.0)
    est = list(comps)
    est[0] = np.zeros((3, 3))
    assert mean_rel_error(comps, est) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        mean_rel_error([np.zeros((2, 2))], [np.zeros((2, 2))])


def test_swiss_examples(rng):
    x = rng.standard_normal((10, 3))
    assert swiss(x, np.zeros(10)) == pytest.approx(1.0)
    pts = np.array([[0.0, 0.0]] * 3 + [[1.0, 2.0]] * 4)
    assert swiss(pts, [0, 0, 0, 1, 1, 1, 1]) == pytest.approx(0.0)
    labels = rng.integers(0, 3, size=10)
    relabeled = np.array(["abc"[k] for k in labels])
    assert swiss(x, labels) == pytest.approx(swiss(x + 5.0, relabeled))
    with pytest.raises(ValueError):
        swiss(np.ones((4, 2)), [0, 0, 1, 1])


@given(st.integers(0, 10_000))
def test_swiss_bounds(seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((12, 3))
    labels = r.integers(0, 3, size=12)
    assert 0.0 <= swiss(x, labels) <= 1.0


def test_swiss_monotone_in_separation(rng):
    noise = rng.standard_normal((40, 2))
    labels = np.repeat([0, 1], 20)
    vals = []
    for d in (0.0, 0.5, 1.0, 2.0, 4.0):
        x = noise + np.outer(labels, [d, 0.0])
        vals.append(swiss(x, labels))
    assert np.all(np.diff(vals) < 0)


def test_variance_table_shape_and_values(rng):
    g = BlockGrid(rng.standard_normal((20, 16)) + 2, (8, 12), (10, 6))
    theta = Decomposition.zeros(g.row_dims, g.col_dims)
    theta.I = [[g.block(i, j).copy() for j in range(2)] for i in range(2)]
    table = variance_table(g, theta)
    assert [e["block"] for e in table] == ["11", "12", "21", "22"]
    for e in table:
        assert e["global"]["r2"] == 0.0 and e["global"]["rank"] == 0
        assert e["signal"]["r2"] == pytest.approx(1.0)
    text = format_variance_table(table)
    assert "1.00 (" in text and "0.00 (0)" in text


def test_residual_diagnostics_noiseless():
    r = np.random.default_rng(0)
    x = r.standard_normal((20, 3)) @ r.standard_normal((3, 18))
    g = BlockGrid(x, (10, 10), (9, 9))
    theta, _ = fit(g, default_penalties(g.row_dims, g.col_dims).scaled(1e-6), SolverConfig(rel_tol=1e-12, max_iter=5000))
    for d in residual_diagnostics(g, theta):
        assert d["sd"] < 1e-4
        assert sum(d["counts"]) == d["n"]


def test_residual_diagnostics_pure_noise():
    r = np.random.default_rng(1)
    x = 1.5 * r.standard_normal((200, 200))
    g = BlockGrid(x, (100, 100), (100, 100))
    diag = residual_diagnostics(g, Decomposition.zeros(g.row_dims, g.col_dims))
    for d in diag:
        assert abs(d["sd"] / 1.5 - 1) < 0.05
        assert sum(d["counts"]) == 100 * 100
        assert len(d["counts"]) == 50
