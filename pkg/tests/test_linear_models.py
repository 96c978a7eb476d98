import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saferoute import linear_models as lm
from saferoute.errors import FitError
from saferoute.linear_models import (DesignMatrix, ModelCoefficients, fit_lasso, fit_ols, fit_poisson,
                                     fit_ridge, lasso_lambda_max, lasso_objective, poisson_loglik, predict,
                                     soft_threshold)

from oracles import gauss_solve, refine_min, refine_min_2d


def trend(y):
    return lm.design_for_series(y)


def random_design(seed, n=20, p=2):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    return DesignMatrix(X, X @ rng.normal(size=p) + rng.normal(scale=0.3, size=n))


def test_ols_exact_line():
    x = np.arange(6.0)
    d = DesignMatrix(np.column_stack([np.ones(6), x]), 1 + 2 * x)
    np.testing.assert_allclose(fit_ols(d).theta, [1, 2], atol=1e-10)


def test_ols_zero_y():
    d = DesignMatrix(np.column_stack([np.ones(5), np.arange(5.0)]), np.zeros(5))
    np.testing.assert_array_equal(fit_ols(d).theta, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_ols_matches_elimination_oracle(seed):
    d = random_design(seed)
    ref = gauss_solve(d.X.T @ d.X, d.X.T @ d.y)
    np.testing.assert_allclose(fit_ols(d).theta, ref, atol=1e-9)


def test_ols_singular_recommends_ridge():
    d = DesignMatrix(np.ones((4, 2)), np.arange(4.0))
    with pytest.raises(FitError, match="ridge"):
        fit_ols(d)


def test_ridge_identity_closed_form():
    d = DesignMatrix(np.eye(2), [2.0, 4.0])
    np.testing.assert_allclose(fit_ridge(d, 1.0).theta, [1.0, 2.0], atol=1e-12)


def test_ridge_limits():
    d = random_design(3)
    np.testing.assert_allclose(fit_ridge(d, 1e-12).theta, fit_ols(d).theta, atol=1e-6)
    big = fit_ridge(d, 1e9).theta
    assert np.linalg.norm(big) < 1e-6 * np.linalg.norm(d.X.T @ d.y)


def test_ridge_shrinkage_monotone():
    d = random_design(4)
    norms = [np.linalg.norm(fit_ridge(d, lam).theta) for lam in (0.01, 0.1, 1, 10)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


@pytest.mark.parametrize("lam", [0, -1])
def test_ridge_rejects_non_positive_lambda(lam):
    with pytest.raises(ValueError, match="fit_ols"):
        fit_ridge(random_design(0), lam)


def test_ridge_unpenalized_intercept_option():
    d = DesignMatrix(np.column_stack([np.ones(4), [0, 1, 2, 3.0]]), [10, 10, 10, 10.0])
    theta = fit_ridge(d, 1e6, penalize_intercept=False).theta
    assert theta[0] == pytest.approx(10, abs=1e-4) and abs(theta[1]) < 1e-4


@pytest.mark.parametrize("z,g,out", [(3, 1, 2), (-0.5, 1, 0), (-3, 1, -2)])
def test_soft_threshold(z, g, out):
    assert soft_threshold(z, g) == out


def test_lasso_zero_at_lambda_max():
    d = random_design(5, p=3)
    lam = lasso_lambda_max(d)
    at = fit_lasso(d, lam).theta
    assert np.all(at[1:] == 0.0)
    assert at[0] == pytest.approx(d.y.mean())
    assert np.any(fit_lasso(d, 0.9 * lam).theta[1:] != 0.0)


def test_lasso_vanishing_penalty_matches_ols():
    d = random_design(6, p=3)
    np.testing.assert_allclose(fit_lasso(d, 1e-10).theta, fit_ols(d).theta, atol=1e-4)


@pytest.mark.parametrize("lam", [0.5, 3.0, 10.0])
def test_lasso_matches_grid_search(lam):
    d = random_design(7)
    x, y = d.X[:, 1], d.y

    def J(beta):
        b0 = y.mean() - beta * x.mean()
        return lasso_objective(d, np.array([b0, beta]), lam)

    beta = refine_min(J, -10, 10)
    assert fit_lasso(d, lam).theta[1] == pytest.approx(beta, abs=1e-4)


def test_lasso_objective_never_increases():
    d = random_design(8, p=4)
    trace = fit_lasso(d, 1.0).diagnostics.objective_trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_lasso_reports_non_convergence():
    m = fit_lasso(random_design(9, p=4), 0.01, max_sweeps=1, tol=0.0)
    assert m.diagnostics.converged is False and np.all(np.isfinite(m.theta))


def test_poisson_intercept_only():
    m = fit_poisson(DesignMatrix(np.ones((3, 1)), [1, 2, 3]))
    assert m.theta[0] == pytest.approx(math.log(2), abs=1e-6)
    m = fit_poisson(DesignMatrix(np.ones((4, 1)), [5, 5, 5, 5]))
    assert m.theta[0] == pytest.approx(math.log(5), abs=1e-12)


def test_poisson_intercept_matches_grid():
    d = DesignMatrix(np.ones((3, 1)), [1, 2, 3])
    t0 = refine_min(lambda t: -poisson_loglik(d, np.array([t])), -2, 3)
    assert fit_poisson(d).theta[0] == pytest.approx(t0, abs=1e-6)


def test_poisson_two_parameters_match_grid():
    y = [2, 3, 6, 7, 8, 9, 12, 15]
    d = trend(y)
    t = refine_min_2d(lambda a, b: -poisson_loglik(d, np.array([a, b])), ((-1, 4), (-3, 3)))
    np.testing.assert_allclose(fit_poisson(d).theta, t, atol=1e-4)


@pytest.mark.parametrize("seed", range(4))
def test_poisson_score_equations(seed):
    rng = np.random.default_rng(seed)
    y = rng.poisson(np.linspace(2, 9, 19))
    d = trend(y)
    m = fit_poisson(d)
    mu = np.exp(d.X @ m.theta)
    assert mu.sum() == pytest.approx(y.sum(), abs=1e-6)
    assert m.diagnostics.converged


def test_poisson_all_zero_needs_pseudo_count():
    d = trend(np.zeros(10))
    with pytest.raises(FitError, match="pseudo_count"):
        fit_poisson(d)
    m = fit_poisson(d, pseudo_count=0.5)
    assert predict(m, [1, 0.5]) == pytest.approx(0.5)


def test_predict_examples():
    assert predict(ModelCoefficients(np.array([math.log(2), 0]), "poisson"), [1, 7]) == pytest.approx(2.0)
    assert predict(ModelCoefficients(np.array([1.0, 2.0]), "ols"), [1, 3]) == 7
    assert predict(ModelCoefficients(np.zeros(2), "ridge"), [1, 123.0]) == 0


def test_coefficients_round_trip():
    m = fit_poisson(trend([1, 3, 2, 5, 4, 6, 8, 7]))
    again = ModelCoefficients.from_dict(m.to_dict())
    np.testing.assert_array_equal(again.theta, m.theta)
    assert again.model_kind == "poisson"


def test_forecast_trend_continues_index():
    y = 1 + 2 * np.arange(10.0) / 9
    m = fit_ols(trend(y))
    np.testing.assert_allclose(lm.forecast_trend(m, 10, 3), 1 + 2 * np.arange(10, 13) / 9, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=8, max_size=30).filter(lambda v: any(v)))
def test_poisson_matches_counts_total(counts):
    d = trend(counts)
    m = fit_poisson(d)
    assert np.exp(d.X @ m.theta).sum() == pytest.approx(sum(counts), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=30), st.floats(0.01, 100))
def test_lasso_kkt(values, lam):
    d = trend(values)
    m = fit_lasso(d, lam)
    r = d.y - d.X @ m.theta
    grad = -2 * d.X[:, 1] @ r
    b = m.theta[1]
    if b == 0:
        assert abs(grad) <= lam * (1 + 1e-6) + 1e-6
    else:
        assert grad + lam * np.sign(b) == pytest.approx(0, abs=1e-4 * (1 + lam))


def test_lasso_zero_set_grows_with_lambda():
    rng = np.random.default_rng(12)
    X = np.column_stack([np.ones(30), rng.normal(size=(30, 5))])
    d = DesignMatrix(X, X @ [1, 3, -2, 0.5, 0.1, 0] + rng.normal(scale=0.5, size=30))
    zero_sets = []
    for lam in np.geomspace(0.01, lasso_lambda_max(d), 15):
        theta = fit_lasso(d, lam).theta[1:]
        zero_sets.append(set(np.flatnonzero(np.abs(theta) <= 1e-10)))
    assert all(a <= b for a, b in zip(zero_sets, zero_sets[1:]))
    assert zero_sets[-1] == set(range(5))


@pytest.mark.parametrize("kind", lm.MODEL_KINDS)
def test_fitters_bit_identical(kind):
    d = trend([3, 1, 4, 1, 5, 9, 2, 6, 5, 3])
    np.testing.assert_array_equal(lm.fit(kind, d).theta, lm.fit(kind, d).theta)
