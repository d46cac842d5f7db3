import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from mogkan.errors import MogkanError
from mogkan.selection import (
    apply_standardization,
    lambda_max,
    lasso_fit,
    lasso_kkt_violation,
    lasso_objective,
    lasso_select,
    lasso_select_multiclass,
    regularized_incomplete_beta,
    standardize,
    welch_filter,
    welch_pvalues,
)

from oracles import lasso_oracle


def test_standardize_simple_column():
    Z, mean, std = standardize(np.array([[1.0], [2.0], [3.0]]))
    assert Z[:, 0].mean() == 0.0
    assert Z[:, 0].std(ddof=1) == pytest.approx(1.0, abs=1e-15)
    assert mean[0] == 2.0 and std[0] == 1.0


def test_standardize_constant_column():
    Z, mean, std = standardize(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
    np.testing.assert_array_equal(Z[:, 0], 0.0)
    assert std[0] == 0.0 and mean[0] == 5.0


def test_standardize_round_trip():
    X = np.random.default_rng(0).normal(3, 2, size=(10, 4))
    Z, mean, std = standardize(X)
    np.testing.assert_array_equal(apply_standardization(X, mean, std), Z)


def test_standardize_too_few_rows():
    with pytest.raises(MogkanError) as exc:
        standardize(np.ones((1, 3)))
    assert exc.value.kind == "too-few-rows"


@settings(max_examples=100)
@given(st.floats(1e-4, 0.9999), st.floats(0.05, 200), st.floats(0.05, 200))
def test_incomplete_beta_matches_scipy(x, a, b):
    assert regularized_incomplete_beta(x, a, b) == pytest.approx(special.betainc(a, b, x), rel=1e-9, abs=1e-14)


def test_welch_matches_scipy():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(25, 12))
    X[:10] += rng.normal(0, 1, 12)
    groups = np.r_[np.zeros(10), np.ones(15)]
    ref = stats.ttest_ind(X[groups == 0], X[groups == 1], equal_var=False).pvalue
    np.testing.assert_allclose(welch_pvalues(X, groups), ref, rtol=1e-9)


def test_welch_identical_means_threshold_one_keeps_all():
    X = np.tile(np.array([[1.0, 2.0], [3.0, 4.0]]), (3, 1))
    groups = np.array([0, 0, 0, 1, 1, 1])
    assert welch_filter(X, groups, 1.0) == [0, 1]


def test_welch_separated_feature_kept():
    rng = np.random.default_rng(2)
    X = np.r_[rng.normal(0, 0.1, (10, 1)), rng.normal(10, 0.1, (10, 1))]
    X = np.c_[X, rng.normal(size=20)]
    groups = np.r_[np.zeros(10), np.ones(10)]
    p = welch_pvalues(X, groups)
    ref = stats.ttest_ind(X[:10, 0], X[10:, 0], equal_var=False).pvalue
    assert p[0] < 1e-10
    assert p[0] == pytest.approx(ref, rel=1e-6)
    assert 0 in welch_filter(X, groups, 0.001)


def test_welch_threshold_zero_empty():
    X = np.random.default_rng(3).normal(size=(8, 3))
    assert welch_filter(X, np.r_[np.zeros(4), np.ones(4)], 0.0) == []


def test_welch_degenerate_groups():
    with pytest.raises(MogkanError) as exc:
        welch_filter(np.ones((3, 2)), np.array([0, 1, 1]))
    assert exc.value.kind == "degenerate-groups"


def random_problem(seed, n=30, p=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p) * (rng.random(p) < 0.6)
    y = X @ beta + rng.normal(size=n)
    return X, y


def test_lambda_max_gives_exact_zeros():
    X, y = random_problem(0)
    lam = lambda_max(X, y)
    assert lam == pytest.approx(np.max(np.abs(2 * X.T @ y)))
    for scale in (1.0, 1.5, 100.0):
        res = lasso_fit(X, y, lam * scale)
        assert res.converged
        assert np.all(res.beta == 0.0)
    assert lasso_select(X, y, 1e9) == []


def test_lambda_zero_orthonormal_is_least_squares():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.normal(size=(20, 4)))
    y = rng.normal(size=20)
    res = lasso_fit(Q, y, 0.0, tol=1e-10)
    np.testing.assert_allclose(res.beta, Q.T @ y, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_oracle(seed):
    X, y = random_problem(100 + seed, n=20, p=3)
    lam = 0.3 * lambda_max(X, y)
    res = lasso_fit(X, y, lam)
    assert res.converged
    oracle = lasso_oracle(X, y, lam)
    assert abs(lasso_objective(X, y, res.beta, lam) - oracle) <= 1e-6 * oracle


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 0.9))
def test_kkt_certificate_on_convergence(seed, frac):
    X, y = random_problem(seed, n=25, p=6)
    tol = 1e-8
    res = lasso_fit(X, y, frac * lambda_max(X, y), tol=tol)
    assert res.converged
    assert lasso_kkt_violation(X, y, res.beta, frac * lambda_max(X, y)) <= 10 * tol


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1.2))
def test_objective_non_increasing(seed, frac):
    X, y = random_problem(seed, n=15, p=8)
    res = lasso_fit(X, y, frac * lambda_max(X, y), track_objective=True, max_iter=500)
    h = np.array(res.objective_history)
    assert np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, h[:-1]))


def planted(seed=0, n=200, p=50, true=(3, 17, 41)):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[list(true)] = [2.0, -1.5, 1.0]
    return X, X @ beta + 0.5 * rng.normal(size=n), set(true)


def test_planted_support_recovered():
    X, y, true = planted()
    assert set(lasso_select(X, y, 50.0)) >= true


def test_support_scaling_on_planted():
    X, y, _ = planted()
    assert lasso_select(X, y, 50.0) == lasso_select(X, 2 * y, 100.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_column_permutation(seed):
    X, y = random_problem(seed, n=25, p=6)
    perm = np.random.default_rng(seed).permutation(6)
    lam = 0.2 * lambda_max(X, y)
    a = lasso_fit(X, y, lam, tol=1e-12).beta
    b = lasso_fit(X[:, perm], y, lam, tol=1e-12).beta
    np.testing.assert_allclose(b, a[perm], atol=1e-8)


def test_fit_errors():
    X, y = random_problem(0)
    with pytest.raises(MogkanError):
        lasso_fit(X, y, -1.0)
    with pytest.raises(MogkanError):
        lasso_fit(X, y, 1.0, tol=0.0)


def test_no_convergence_is_flagged():
    X, y = random_problem(5)
    res = lasso_fit(X, y, 1.0, max_iter=1)
    assert not res.converged and res.n_iter == 1


def test_multiclass_union():
    rng = np.random.default_rng(6)
    labels = np.repeat([0, 1, 2], 40)
    X = rng.normal(size=(120, 10))
    X[labels == 1, 2] += 3
    X[labels == 2, 7] += 3
    sel = lasso_select_multiclass(X, labels, 40.0)
    assert {2, 7} <= set(sel)
    assert lasso_select_multiclass(X, labels, 1e9) == []
