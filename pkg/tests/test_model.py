import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrmlr.model import (
    add_intercept,
    compute_probabilities,
    default_penalized,
    labels_to_counts,
    negative_log_likelihood,
    nll_and_gradient,
    nll_gradient,
)
from oracles import central_difference, naive_nll


def _instance(rng, n, p, K, trials=1):
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=(p, K))
    labels = rng.integers(0, K, size=n)
    Y = labels_to_counts(labels, K) * trials
    return X, Y, beta


def test_zero_beta_gives_uniform_probabilities():
    X = np.random.default_rng(0).normal(size=(7, 3))
    P = compute_probabilities(X, np.zeros((3, 5)))
    assert np.array_equal(P, np.full((7, 5), 0.2))


def test_two_category_closed_form():
    P = compute_probabilities(np.ones((1, 1)), np.array([[0.0, np.log(3.0)]]))
    np.testing.assert_allclose(P, [[0.25, 0.75]], rtol=0, atol=1e-15)


def test_shift_invariance_of_probabilities_and_nll():
    rng = np.random.default_rng(1)
    X, Y, beta = _instance(rng, 9, 4, 6)
    d = rng.normal(size=(4, 1))
    shifted = beta + d @ np.ones((1, 6))
    np.testing.assert_allclose(compute_probabilities(X, shifted), compute_probabilities(X, beta),
                               atol=1e-14)
    assert negative_log_likelihood(X, Y, shifted) == pytest.approx(
        negative_log_likelihood(X, Y, beta), abs=1e-12)


def test_nll_at_zero_is_log_K():
    rng = np.random.default_rng(2)
    X, Y, _ = _instance(rng, 11, 3, 7)
    assert negative_log_likelihood(X, Y, np.zeros((3, 7))) == pytest.approx(np.log(7), abs=1e-14)


def test_nll_matches_naive_double_loop():
    rng = np.random.default_rng(3)
    X, Y, beta = _instance(rng, 5, 3, 4)
    Y[2] *= 3  # multi-trial row
    assert negative_log_likelihood(X, Y, beta) == pytest.approx(naive_nll(X, Y, beta), rel=1e-13)


def test_gradient_at_zero_closed_form():
    rng = np.random.default_rng(4)
    X, Y, _ = _instance(rng, 8, 3, 4)
    expected = X.T @ (np.full((8, 4), 0.25) - Y) / 8
    np.testing.assert_allclose(nll_gradient(X, Y, np.zeros((3, 4))), expected, atol=1e-15)


def test_gradient_rows_sum_to_zero():
    rng = np.random.default_rng(5)
    X, Y, beta = _instance(rng, 20, 5, 6)
    np.testing.assert_allclose(nll_gradient(X, Y, beta).sum(axis=1), 0.0, atol=1e-14)


def test_gradient_matches_finite_differences_small():
    rng = np.random.default_rng(6)
    X, Y, beta = _instance(rng, 6, 4, 3)
    fd = central_difference(lambda b: naive_nll(X, Y, b), beta, h=1e-6)
    g = nll_gradient(X, Y, beta)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_value_and_gradient_share_pass():
    rng = np.random.default_rng(7)
    X, Y, beta = _instance(rng, 10, 3, 4)
    v, g = nll_and_gradient(X, Y, beta)
    assert v == negative_log_likelihood(X, Y, beta)
    assert np.array_equal(g, nll_gradient(X, Y, beta))


def test_large_linear_predictors_are_stable():
    X = np.array([[1.0], [-1.0]])
    beta = np.array([[700.0, 699.0, -700.0]])
    P = compute_probabilities(X, beta)
    assert np.all(np.isfinite(P))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    Y = np.array([[1.0, 0, 0], [0, 0, 1.0]])
    assert np.isfinite(negative_log_likelihood(X, Y, beta))


@pytest.mark.parametrize("bad_beta", [np.zeros((2, 3)), np.zeros(3)])
def test_dimension_mismatch_raises(bad_beta):
    with pytest.raises(ValueError):
        compute_probabilities(np.ones((4, 3)), bad_beta)


def test_response_column_mismatch_raises():
    with pytest.raises(ValueError):
        negative_log_likelihood(np.ones((2, 1)), np.eye(2), np.zeros((1, 3)))


def test_non_finite_predictor_raises():
    with pytest.raises(ValueError):
        compute_probabilities(np.ones((1, 1)), np.array([[np.inf, 0.0]]))


def test_intercept_helpers():
    X = add_intercept(np.arange(6.0).reshape(3, 2))
    assert np.array_equal(X[:, 0], np.ones(3))
    assert default_penalized(X).tolist() == [False, True, True]
    assert default_penalized(X[:, 1:]).tolist() == [True, True]


def test_labels_to_counts_validation():
    assert labels_to_counts([0, 2], 3).tolist() == [[1, 0, 0], [0, 0, 1]]
    with pytest.raises(ValueError):
        labels_to_counts([0, 3], 3)
    with pytest.raises(ValueError):
        labels_to_counts([-1, 0])
    with pytest.raises(ValueError):
        labels_to_counts([0.5])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 700.0))
def test_probability_rows_sum_to_one(seed, scale):
    rng = np.random.default_rng(seed)
    eta_dir = rng.normal(size=(5, 4))
    X = np.eye(5)
    beta = scale * eta_dir / np.abs(eta_dir).max()
    P = compute_probabilities(X, beta)
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_nll_convex_along_segments(seed):
    rng = np.random.default_rng(seed)
    X, Y, b1 = _instance(rng, 12, 3, 4)
    b2 = rng.normal(size=b1.shape) * 2
    g1, g2 = negative_log_likelihood(X, Y, b1), negative_log_likelihood(X, Y, b2)
    for t in (0.25, 0.5, 0.75):
        mid = negative_log_likelihood(X, Y, t * b1 + (1 - t) * b2)
        assert mid <= t * g1 + (1 - t) * g2 + 1e-10
