import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalball.errors import DegenerateDataError, SchemaError
from causalball.outcome_lasso import (
    cv_select_lambda,
    fit_lasso,
    lambda_grid,
    lambda_max,
    predict,
)

from oracles import ols, soft_threshold


def orthonormal_design(n, q, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    a = np.column_stack([np.ones(n), rng.normal(size=(n, q))])
    qmat, _ = np.linalg.qr(a)
    return scale * np.sqrt(n) * qmat[:, 1:]  # centred, population sd == scale


@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_soft_threshold_closed_form(scale):
    n, q = 80, 6
    x = orthonormal_design(n, q, 0, scale)
    rng = np.random.default_rng(1)
    y = x @ np.array([3.0, -2.0, 0.5, 0.0, 0.1, -0.05]) + rng.normal(size=n) + 4.0
    for lam in (0.0, 5.0, 40.0, 400.0):
        fit = fit_lasso(x, y, lam)
        for j in range(q):
            z = x[:, j] @ (y - y.mean()) / (n * scale**2)
            want = soft_threshold(z, lam / (2 * n * scale))
            assert abs(fit.coefficients[j] - want) <= 1e-8


def test_lambda_zero_matches_normal_equations():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(60, 5)) * [1, 3, 0.2, 1, 5]
    y = x @ [1.0, -1.0, 2.0, 0.0, 0.3] + rng.normal(size=60)
    fit = fit_lasso(x, y, 0.0)
    ref = ols(x, y)
    assert abs(fit.intercept - ref[0]) <= 1e-6
    assert np.max(np.abs(fit.coefficients - ref[1:])) <= 1e-6
    design = np.column_stack([np.ones(60), x])
    assert np.max(np.abs(predict(fit, x) - design @ ref)) <= 1e-6


def test_full_shrinkage():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(40, 4)), rng.normal(size=40) + 7
    lmax = lambda_max(x, y)
    fit = fit_lasso(x, y, lmax * 1.0001)
    assert not np.any(fit.coefficients)
    assert fit.intercept == pytest.approx(y.mean(), abs=1e-12)
    assert fit.nonzero_set == []
    assert np.any(fit_lasso(x, y, lmax * 0.9).coefficients)


def test_predict_examples():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(30, 3)), rng.normal(size=30)
    fit = fit_lasso(x, y, 1e6)
    assert predict(fit, [1.0, 2.0, 3.0]) == fit.intercept
    fit.coefficients = np.array([1.0, 0.0, 0.0])
    fit.intercept = 0.0
    assert predict(fit, [2.5, 9.0, -4.0]) == 2.5
    with pytest.raises(SchemaError):
        predict(fit, [1.0, 2.0])


def test_errors():
    with pytest.raises(SchemaError):
        fit_lasso(np.ones((3, 2)), [1.0, 2.0, 3.0], -1.0)
    with pytest.raises(SchemaError):
        fit_lasso(np.ones((3, 2)), [1.0, 2.0], 1.0)
    with pytest.raises(SchemaError):
        fit_lasso(np.ones((3, 2)), [1.0, np.nan, 2.0], 1.0)
    with pytest.raises(DegenerateDataError):
        cv_select_lambda(np.ones((5, 2)), np.arange(5.0), folds=10)


def test_names_and_nonzero():
    x = np.column_stack([np.arange(20.0), np.sin(np.arange(20.0))])
    fit = fit_lasso(x, 2 * x[:, 0], 0.1, names=("a", "b"), arm=1)
    assert "a" in fit.nonzero_set and fit.arm == 1
    assert set(fit.nonzero_set) == {fit.names[j] for j in np.flatnonzero(fit.coefficients)}


def test_cv_grid_properties():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(50, 4)), rng.normal(size=50)
    rep = cv_select_lambda(x, y, grid_size=20, seed=1)
    assert np.all(np.diff(rep.lambda_path) < 0)
    assert rep.lambda_path[0] / rep.lambda_path[-1] == pytest.approx(100.0)
    assert rep.cv_error.shape == rep.cv_se.shape == (20,)
    one = cv_select_lambda(x, y, grid_size=1, seed=1)
    assert one.chosen_lambda == one.lambda_path[0]
    se1 = cv_select_lambda(x, y, grid_size=20, seed=1, rule="1se")
    assert se1.chosen_lambda >= rep.chosen_lambda


def test_cv_is_seeded():
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=(50, 4)), rng.normal(size=50)
    a = cv_select_lambda(x, y, seed=3)
    b = cv_select_lambda(x, y, seed=3)
    assert np.array_equal(a.cv_error, b.cv_error)


def test_perfect_signal_survives_cv():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(60, 5))
    y = 1.5 * x[:, 2]
    rep = cv_select_lambda(x, y, seed=0)
    fit = fit_lasso(x, y, rep.chosen_lambda)
    assert 2 in fit.nonzero


def test_pure_noise_selects_heavy_shrinkage():
    hits = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        x, y = rng.normal(size=(100, 10)), rng.normal(size=100)
        rep = cv_select_lambda(x, y, seed=s)
        hits += rep.chosen_lambda >= np.quantile(rep.lambda_path, 0.75)
    assert hits >= 80


def test_lambda_grid_flat_outcome():
    assert lambda_grid(0.0, 3)[0] == 1.0


def kkt_violation(x, y, fit):
    xc = x - x.mean(axis=0)
    scale = np.sqrt(np.mean(xc**2, axis=0))
    xs = xc / scale
    b = fit.coefficients * scale
    r = (y - y.mean()) - xs @ b
    g = 2 * xs.T @ r
    lam = fit.lam
    worst = 0.0
    for j in range(x.shape[1]):
        if b[j] != 0:
            worst = max(worst, abs(g[j] - lam * np.sign(b[j])))
        else:
            worst = max(worst, abs(g[j]) - lam)
    return worst


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(25, 80), st.integers(1, 12),
       st.floats(0.0, 1.0))
def test_kkt_and_monotone_objective(seed, n, q, frac):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, q))
    y = x[:, 0] - 0.5 * x[:, -1] + rng.normal(size=n)
    lam = frac * lambda_max(x, y)
    fit = fit_lasso(x, y, lam, record_history=True)
    assert fit.converged
    assert kkt_violation(x, y, fit) <= 1e-5 * n
    h = fit.history
    assert np.all(np.diff(h) <= 1e-9 * max(1.0, abs(h[0])))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20.0), st.floats(0.0, 1.0))
def test_scale_equivariance(seed, c, frac):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 5))
    y = x @ [2.0, 0.0, -1.0, 0.0, 0.5] + rng.normal(size=40)
    lam = frac * lambda_max(x, y)
    a = fit_lasso(x, y, lam, tol=1e-12)
    b = fit_lasso(x, c * y, c * lam, tol=1e-12)
    assert np.allclose(b.coefficients, c * a.coefficients, atol=1e-7 * c, rtol=1e-7)
