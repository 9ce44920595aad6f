"""Multinomial logistic model: probabilities, negative log-likelihood, gradient.

Arrays follow the conventions used throughout the package:

* ``X`` is an ``(n, p)`` design matrix. When its first column is identically
  one it is treated as an intercept column and the first coefficient row is
  left unpenalized.
* ``Y`` is an ``(n, K)`` matrix of nonnegative category counts. Row sums are
  the number of trials of each subject (usually one).
* ``beta`` is a ``(p, K)`` coefficient matrix; column ``k`` holds the linear
  predictor weights of category ``k``.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "add_intercept",
    "has_intercept_column",
    "default_penalized",
    "labels_to_counts",
    "check_design",
    "check_response",
    "linear_predictor",
    "compute_probabilities",
    "negative_log_likelihood",
    "nll_gradient",
    "nll_and_gradient",
]


def add_intercept(X):
    """Return ``X`` with a leading column of ones."""
    X = np.asarray(X, dtype=float)
    return np.hstack([np.ones((X.shape[0], 1)), X])


def has_intercept_column(X):
    X = np.asarray(X)
    return X.ndim == 2 and X.shape[1] >= 1 and bool(np.all(X[:, 0] == 1.0))


def default_penalized(X):
    """Boolean mask of penalized coefficient rows.

    Every row is penalized except the first one when ``X`` carries an
    intercept column.
    """
    X = np.asarray(X)
    mask = np.ones(X.shape[1], dtype=bool)
    if has_intercept_column(X):
        mask[0] = False
    return mask


def labels_to_counts(labels, n_categories=None):
    """Convert integer class labels in ``0..K-1`` to single-trial counts."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if labels.size and not np.all(labels == np.round(labels)):
        raise ValueError("labels must be integers")
    labels = labels.astype(int)
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be nonnegative")
    K = int(labels.max()) + 1 if n_categories is None else int(n_categories)
    if labels.size and labels.max() >= K:
        raise ValueError(f"label {labels.max()} out of range for {K} categories")
    Y = np.zeros((labels.size, K))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def check_design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design matrix must be a nonempty 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite entries")
    return X


def check_response(Y, n=None):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError(f"response must be an (n, K) count matrix, got shape {Y.shape}")
    if Y.shape[1] < 2:
        raise ValueError("response needs at least two categories")
    if n is not None and Y.shape[0] != n:
        raise ValueError(f"response has {Y.shape[0]} rows but design has {n}")
    if not np.all(np.isfinite(Y)) or np.any(Y < 0):
        raise ValueError("response counts must be finite and nonnegative")
    return Y


def _check_beta(X, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 2 or beta.shape[0] != X.shape[1]:
        raise ValueError(
            f"coefficient matrix shape {beta.shape} incompatible with design of shape {X.shape}"
        )
    return beta


def linear_predictor(X, beta):
    X = np.asarray(X, dtype=float)
    beta = _check_beta(X, beta)
    eta = X @ beta
    if not np.all(np.isfinite(eta)):
        raise ValueError("non-finite linear predictor")
    return eta


def _log_normalizer(eta):
    m = eta.max(axis=1, keepdims=True)
    shifted = np.exp(eta - m)
    s = shifted.sum(axis=1, keepdims=True)
    return m[:, 0] + np.log(s[:, 0]), shifted / s


def compute_probabilities(X, beta):
    """Category probabilities ``softmax(X @ beta)`` computed row-wise.

    The per-row maximum is subtracted before exponentiating, so linear
    predictors of several hundred in magnitude are handled without overflow.

    >>> compute_probabilities(np.ones((1, 1)), np.array([[0.0, np.log(3.0)]]))
    array([[0.25, 0.75]])
    """
    _, probs = _log_normalizer(linear_predictor(X, beta))
    return probs


def nll_and_gradient(X, Y, beta):
    """Return ``(G(beta), grad G(beta))`` sharing one pass over the data.

    ``G`` is the multinomial negative log-likelihood divided by ``n`` with
    constants dropped, and the gradient is ``X.T @ (diag(trials) P - Y) / n``.
    """
    X = np.asarray(X, dtype=float)
    Y = check_response(Y, X.shape[0])
    beta = _check_beta(X, beta)
    if beta.shape[1] != Y.shape[1]:
        raise ValueError(f"beta has {beta.shape[1]} columns but response has {Y.shape[1]}")
    eta = linear_predictor(X, beta)
    trials = Y.sum(axis=1)
    lse, probs = _log_normalizer(eta)
    n = X.shape[0]
    value = float(np.sum(trials * lse - np.sum(Y * eta, axis=1)) / n)
    grad = X.T @ (trials[:, None] * probs - Y) / n
    return value, grad


def negative_log_likelihood(X, Y, beta):
    X = np.asarray(X, dtype=float)
    Y = check_response(Y, X.shape[0])
    beta = _check_beta(X, beta)
    if beta.shape[1] != Y.shape[1]:
        raise ValueError(f"beta has {beta.shape[1]} columns but response has {Y.shape[1]}")
    eta = linear_predictor(X, beta)
    lse, _ = _log_normalizer(eta)
    return float(np.sum(Y.sum(axis=1) * lse - np.sum(Y * eta, axis=1)) / X.shape[0])


def nll_gradient(X, Y, beta):
    return nll_and_gradient(X, Y, beta)[1]


def _fast_nll(X, Y, trials, beta):
    # unchecked kernels for the solver loop; inputs validated once upstream
    eta = X @ beta
    m = eta.max(axis=1)
    if not np.all(np.isfinite(m)):
        return np.inf
    lse = m + np.log(np.exp(eta - m[:, None]).sum(axis=1))
    return float(np.sum(trials * lse - np.sum(Y * eta, axis=1)) / X.shape[0])


def _fast_nll_grad(X, Y, trials, beta, return_probs=False):
    eta = X @ beta
    m = eta.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValueError("non-finite linear predictor")
    e = np.exp(eta - m)
    s = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(s[:, 0])
    n = X.shape[0]
    value = float(np.sum(trials * lse - np.sum(Y * eta, axis=1)) / n)
    probs = e / s
    grad = X.T @ (trials[:, None] * probs - Y) / n
    if return_probs:
        return value, grad, probs
    return value, grad


def _bregman_gap(X, trials, probs, d):
    """``G(z + d) - G(z) - <grad G(z), d>`` without cancellation against ``G``.

    ``probs`` are the fitted probabilities at ``z``. The response terms cancel
    exactly, leaving the Bregman divergence of the log-partition, which is
    evaluated through ``log1p``/``expm1``. Also returns a bound on the
    rounding error of the result.
    """
    delta = X @ d
    a = np.sum(probs * delta, axis=1)
    s = np.sum(probs * np.expm1(delta), axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        # s > -1 always; inf propagates for huge steps and fails the test
        gap = float(np.sum(trials * (np.log1p(s) - a)) / X.shape[0])
    scale = float(np.sum(trials * np.sum(probs * np.abs(delta), axis=1)) / X.shape[0])
    return gap, 8.0 * np.finfo(float).eps * scale
