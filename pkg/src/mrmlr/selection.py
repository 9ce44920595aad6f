"""Tuning grids, model selection and evaluation metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import check_design, check_response, compute_probabilities, negative_log_likelihood
from .prox import _multires_rows, collapse_groups
from .solver import SolverConfig, _resolve_penalized, fit, fit_collapsed, fit_path

__all__ = [
    "TuningGrid",
    "MetricsReport",
    "CVResult",
    "GRID_MARGIN",
    "null_probabilities",
    "gamma_max",
    "lambda_max",
    "collapse_lambda",
    "build_grid",
    "deviance",
    "validation_deviances",
    "select_model",
    "cross_validate",
    "hellinger",
    "kl_divergence",
    "classification_error",
    "degrees_of_freedom",
    "evaluate_metrics",
    "probability_metrics",
]

# Relative margin added to the closed-form endpoints so that fits at the
# endpoint land strictly inside the all-zero (or all-collapsed) region.
GRID_MARGIN = 1e-6


@dataclass(frozen=True)
class TuningGrid:
    gammas: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float).reshape(-1)
        lam = np.asarray(self.lambdas, dtype=float).reshape(-1)
        if g.size == 0 or lam.size == 0:
            raise ValueError("tuning grid must be nonempty")
        if np.any(g <= 0) or np.any(lam < 0):
            raise ValueError("gammas must be positive and lambdas nonnegative")
        if np.any(np.diff(g) >= 0) or np.any(np.diff(lam) >= 0):
            raise ValueError("grid values must be strictly descending")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "lambdas", lam)

    @property
    def shape(self):
        return self.gammas.size, self.lambdas.size

    def cells(self):
        for i, g in enumerate(self.gammas):
            for j, lam in enumerate(self.lambdas):
                yield (i, j), g, lam


@dataclass
class MetricsReport:
    hellinger: float | None
    kl_divergence: float | None
    classification_error: float
    deviance: float
    degrees_of_freedom: int | None

    def as_dict(self):
        return {
            "hellinger": self.hellinger,
            "kl": self.kl_divergence,
            "error": self.classification_error,
            "deviance": self.deviance,
            "dof": self.degrees_of_freedom,
        }


def null_probabilities(X, Y, penalized=None, config=None):
    """Fitted probabilities of the model with every penalized row at zero.

    With only an intercept left unpenalized these are the empirical category
    frequencies; with other unpenalized columns the reduced model is fitted.
    """
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    mask = _resolve_penalized(X, penalized)
    free = np.flatnonzero(~mask)
    n, K = Y.shape
    if free.size == 0:
        return np.full((n, K), 1.0 / K)
    if free.size == 1 and np.all(X[:, free[0]] == 1.0):
        freq = Y.sum(axis=0) / Y.sum()
        return np.tile(freq, (n, 1))
    from .prox import CoarseStructure

    sub = X[:, free]
    res = fit(sub, Y, CoarseStructure([], K), 0.0, 0.0, config,
              penalized=np.zeros(free.size, dtype=bool))
    return compute_probabilities(sub, res.beta)


def _null_gradient(X, Y, penalized, config=None):
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    mask = _resolve_penalized(X, penalized)
    P = null_probabilities(X, Y, mask, config)
    trials = Y.sum(axis=1)
    grad = X.T @ (trials[:, None] * P - Y) / X.shape[0]
    return grad[mask]


def gamma_max(X, Y, penalized=None, config=None):
    """Smallest ``gamma`` (plus :data:`GRID_MARGIN`) zeroing every penalized row, for any lambda."""
    g = _null_gradient(X, Y, penalized, config)
    if g.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(g, axis=1))) * (1.0 + GRID_MARGIN)


def lambda_max(X, Y, structure, penalized=None, config=None):
    """Largest centered-gradient norm ``||D g[j, A_l]|| / w_l`` at the null model."""
    g = _null_gradient(X, Y, penalized, config)
    best = 0.0
    for grp, w in zip(structure.groups, structure.weights):
        sub = g[:, grp]
        if sub.size:
            c = sub - sub.mean(axis=1, keepdims=True)
            best = max(best, float(np.max(np.linalg.norm(c, axis=1))) / w)
    return best * (1.0 + GRID_MARGIN)


def _dist_to_dual_set(v, lam, structure):
    # ||prox_{lam Omega}(v)|| is the distance from v to lam times the dual unit set
    out, _ = _multires_rows(v[None, :], lam, structure, 1e-13, 10_000, None)
    return float(np.linalg.norm(out))


def collapse_lambda(X, Y, structure, penalized=None, config=None):
    """Smallest ``lambda`` (plus :data:`GRID_MARGIN`) at which the ``gamma = 0`` fit collapses.

    The ``gamma = 0`` solution for large ``lambda`` is the fit constrained to
    group-constant penalized rows (:func:`mrmlr.solver.fit_collapsed`). It stays
    optimal exactly while the centered gradient of every penalized row lies in
    ``lambda`` times the dual unit set of the multiresolution penalty. For
    disjoint groups that is ``max ||D g[j, A_l]|| / w_l``; overlapping groups
    are handled by bisection on the exact distance to the dual set.
    """
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    mask = _resolve_penalized(X, penalized)
    if structure.n_groups == 0 or not mask.any():
        return 0.0
    res = fit_collapsed(X, Y, structure, config, mask)
    trials = Y.sum(axis=1)
    P = compute_probabilities(X, res.beta)
    g = (X.T @ (trials[:, None] * P - Y) / X.shape[0])[mask]
    g = g - collapse_groups(g, structure)
    if structure.is_disjoint:
        best = max(float(np.max(np.linalg.norm(g[:, grp], axis=1))) / w
                   for grp, w in zip(structure.groups, structure.weights))
        return best * (1.0 + GRID_MARGIN)
    best = 0.0
    for row in g:
        scale = float(np.linalg.norm(row))
        if scale == 0.0:
            continue
        tol = 1e-9 * scale
        hi = scale / float(np.min(structure.weights))
        while _dist_to_dual_set(-row, hi, structure) > tol:
            hi *= 2.0
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _dist_to_dual_set(-row, mid, structure) > tol:
                lo = mid
            else:
                hi = mid
        best = max(best, hi)
    return best * (1.0 + GRID_MARGIN)


def _gradient_floor(X, Y):
    """Size below which a null-model gradient is indistinguishable from rounding."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    scale = float(np.max(np.abs(X))) * float(np.max(Y.sum(axis=1))) if X.size else 0.0
    return 64.0 * np.finfo(float).eps * scale


def build_grid(X, Y, structure, n_gamma=20, n_lambda=5, min_ratio=0.01, penalized=None,
               lambda_min_ratio=None, config=None):
    """Log-spaced grid from the closed-form endpoints.

    ``gammas`` run from :func:`gamma_max` down to ``gamma_max * min_ratio``;
    ``lambdas`` from :func:`lambda_max` down to ``lambda_max *
    lambda_min_ratio`` (``min_ratio`` by default), followed by ``0`` so the
    pure group lasso is on the grid.
    """
    if n_gamma < 1 or n_lambda < 1:
        raise ValueError("n_gamma and n_lambda must be at least 1")
    if not 0 < min_ratio < 1:
        raise ValueError("min_ratio must lie in (0, 1)")
    lam_ratio = min_ratio if lambda_min_ratio is None else lambda_min_ratio
    if not 0 < lam_ratio < 1:
        raise ValueError("lambda_min_ratio must lie in (0, 1)")
    gmax = gamma_max(X, Y, penalized, config)
    if not gmax > _gradient_floor(X, Y):
        raise ValueError("degenerate data: the gradient at the null model is zero")
    gammas = gmax * np.geomspace(1.0, min_ratio, n_gamma) if n_gamma > 1 else np.array([gmax])
    lmax = lambda_max(X, Y, structure, penalized, config)
    if lmax > 0:
        lams = lmax * np.geomspace(1.0, lam_ratio, n_lambda) if n_lambda > 1 else np.array([lmax])
        lambdas = np.append(lams, 0.0)
    else:
        lambdas = np.array([0.0])
    return TuningGrid(gammas, lambdas)


def deviance(X, Y, beta):
    """Twice the total negative log-likelihood (constants dropped)."""
    X = np.asarray(X, dtype=float)
    return 2.0 * X.shape[0] * negative_log_likelihood(X, Y, beta)


def validation_deviances(path, X_val, Y_val):
    out = np.full((len(path.gammas), len(path.lambdas)), np.nan)
    for (i, j), res in path.cells():
        out[i, j] = deviance(X_val, Y_val, res.beta)
    return out


def _argmin_cell(values, gammas, lambdas):
    """Index of the smallest finite value; ties go to larger gamma, then larger lambda."""
    best, best_val = None, math.inf
    order = sorted(np.ndindex(values.shape), key=lambda ij: (-gammas[ij[0]], -lambdas[ij[1]]))
    for ij in order:
        v = values[ij]
        if np.isfinite(v) and v < best_val:
            best, best_val = ij, v
    return best


def select_model(path, X_val, Y_val):
    """Cell of ``path`` with the smallest validation deviance.

    Returns ``(gamma, lambda, FitResult)``.
    """
    if len(path) == 0:
        raise ValueError("every cell of the path failed")
    dev = validation_deviances(path, X_val, Y_val)
    i, j = _argmin_cell(dev, path.gammas, path.lambdas)
    res = path[(i, j)]
    return float(path.gammas[i]), float(path.lambdas[j]), res


@dataclass
class CVResult:
    gammas: np.ndarray
    lambdas: np.ndarray
    fold_deviance: np.ndarray
    mean_deviance: np.ndarray
    best_index: tuple

    @property
    def gamma(self):
        return float(self.gammas[self.best_index[0]])

    @property
    def lam(self):
        return float(self.lambdas[self.best_index[1]])


def cross_validate(X, Y, structure, grid, config=None, n_folds=5, seed=0, penalized=None,
                   n_threads=1):
    """K-fold cross-validation over ``grid``.

    Fold labels come from a seeded permutation of the rows; the held-out
    deviance of each cell is averaged over folds. A cell that fails in any
    fold is excluded from the argmin.
    """
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    n = X.shape[0]
    if not 2 <= n_folds <= n:
        raise ValueError("n_folds must be between 2 and the number of rows")
    config = config or SolverConfig()
    mask = _resolve_penalized(X, penalized)
    folds = np.empty(n, dtype=int)
    folds[np.random.default_rng(seed).permutation(n)] = np.arange(n) % n_folds
    dev = np.full((n_folds,) + grid.shape, np.nan)
    for f in range(n_folds):
        train, test = folds != f, folds == f
        path = fit_path(X[train], Y[train], structure, grid, config, mask, n_threads)
        dev[f] = validation_deviances(path, X[test], Y[test]) / test.sum()
    mean = dev.mean(axis=0)
    best = _argmin_cell(mean, grid.gammas, grid.lambdas)
    if best is None:
        raise ValueError("every cell failed in some fold")
    return CVResult(grid.gammas, grid.lambdas, dev, mean, best)


def hellinger(P_hat, P_true):
    """Mean row-wise Hellinger distance ``||sqrt(p) - sqrt(q)|| / sqrt(2)``."""
    d = np.linalg.norm(np.sqrt(P_hat) - np.sqrt(P_true), axis=1) / np.sqrt(2.0)
    return float(d.mean())


def kl_divergence(P_hat, P_true, floor=1e-300):
    """Mean row-wise ``KL(P_true || P_hat)``; ``P_hat`` is clamped at ``floor``."""
    P_true = np.asarray(P_true, dtype=float)
    q = np.maximum(np.asarray(P_hat, dtype=float), floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P_true > 0, P_true * (np.log(np.maximum(P_true, floor)) - np.log(q)), 0.0)
    return float(max(terms.sum(axis=1).mean(), 0.0))


def classification_error(P_hat, Y):
    pred = np.argmax(P_hat, axis=1)
    observed = np.argmax(np.asarray(Y), axis=1)
    return float(np.mean(pred != observed))


def degrees_of_freedom(beta, penalized):
    """Number of distinct coefficient values, counted row by row.

    Penalized rows that are exactly zero contribute nothing; every other row
    contributes the number of distinct values it contains.
    """
    beta = np.asarray(beta)
    penalized = np.asarray(penalized, dtype=bool)
    total = 0
    for j, row in enumerate(beta):
        if penalized[j] and np.all(row == 0):
            continue
        total += np.unique(row).size
    return int(total)


def probability_metrics(P_hat, Y_test, pi_true=None):
    """Metrics computable from predicted probabilities alone (no dof)."""
    P_hat = np.asarray(P_hat, dtype=float)
    Y_test = check_response(Y_test, P_hat.shape[0])
    # equals 2 n G(beta); the multinomial coefficient is dropped
    dev = float(-2.0 * np.sum(Y_test * np.log(np.maximum(P_hat, 1e-300))))
    hel = kl = None
    if pi_true is not None:
        hel = hellinger(P_hat, pi_true)
        kl = kl_divergence(P_hat, pi_true)
    return MetricsReport(hel, kl, classification_error(P_hat, Y_test), dev, None)


def evaluate_metrics(beta, X_test, Y_test, pi_true=None, penalized=None):
    """Test-set metrics of a fitted coefficient matrix.

    Hellinger distance and KL divergence need the true probabilities
    ``pi_true`` and are ``None`` without them.
    """
    X_test = check_design(X_test)
    beta = np.asarray(beta, dtype=float)
    mask = _resolve_penalized(X_test, penalized)
    P_hat = compute_probabilities(X_test, beta)
    report = probability_metrics(P_hat, Y_test, pi_true)
    report.deviance = deviance(X_test, Y_test, beta)
    report.degrees_of_freedom = degrees_of_freedom(beta, mask)
    return report
