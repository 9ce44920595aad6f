"""Competing estimators: row group lasso, elementwise lasso and the two-step approximation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceWarning, SolverError
from .model import check_design, check_response, compute_probabilities
from .prox import CoarseStructure
from .selection import TuningGrid, _gradient_floor, build_grid, null_probabilities, select_model
from .solver import (
    FitPath,
    FitResult,
    L1Penalty,
    SolverConfig,
    _resolve_penalized,
    _validate,
    fit_path,
    proximal_gradient,
)

__all__ = [
    "ApproxModel",
    "fit_group",
    "fit_l1",
    "l1_gamma_max",
    "l1_grid",
    "fit_approx",
    "coarse_partition",
]


def fit_group(X, Y, structure, gamma_grid, config=None, penalized=None, n_threads=1):
    """Row group lasso path: the full estimator with ``lambda = 0``."""
    K = check_response(Y).shape[1]
    structure = structure if structure is not None else CoarseStructure([], K)
    grid = TuningGrid(np.asarray(gamma_grid, dtype=float), np.array([0.0]))
    return fit_path(X, Y, structure, grid, config, penalized, n_threads)


def l1_gamma_max(X, Y, penalized=None):
    """Smallest ``gamma`` at which every penalized entry of the lasso fit is zero."""
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    mask = _resolve_penalized(X, penalized)
    P = null_probabilities(X, Y, mask)
    grad = X.T @ (Y.sum(axis=1)[:, None] * P - Y) / X.shape[0]
    return float(np.max(np.abs(grad[mask]))) if mask.any() else 0.0


def l1_grid(X, Y, n_gamma=20, min_ratio=0.01, penalized=None):
    gmax = l1_gamma_max(X, Y, penalized) * (1.0 + 1e-6)
    if not gmax > _gradient_floor(X, Y):
        raise ValueError("degenerate data: the gradient at the null model is zero")
    return gmax * np.geomspace(1.0, min_ratio, n_gamma) if n_gamma > 1 else np.array([gmax])


def fit_l1(X, Y, gamma_grid, config=None, penalized=None):
    """Elementwise lasso path, fitted in descending ``gamma`` with warm starts.

    The returned :class:`FitPath` has a single ``lambda`` column holding 0.
    """
    config = config or SolverConfig()
    X, Y = _validate(X, Y, None)
    mask = _resolve_penalized(X, penalized)
    gammas = np.asarray(gamma_grid, dtype=float)
    path = FitPath(gammas, np.array([0.0]))
    warm = np.zeros((X.shape[1], Y.shape[1]))
    for i, gamma in enumerate(gammas):
        try:
            beta, trace, iters, conv, resid, step = proximal_gradient(
                X, Y, L1Penalty(gamma, mask), config, warm)
        except SolverError as exc:
            path.failures[(i, 0)] = str(exc)
            continue
        if not conv:
            warnings.warn(f"lasso fit at gamma={gamma:.4g} did not converge", ConvergenceWarning,
                          stacklevel=2)
        path.results[(i, 0)] = FitResult(beta, trace, iters, conv, float(resid), float(gamma),
                                         0.0, mask, step)
        warm = beta
    return path


def coarse_partition(structure):
    """Coarse classes for the two-step method: the groups plus singleton leftovers."""
    if not structure.is_disjoint:
        raise ValueError("the two-step approximation needs nonoverlapping coarse categories")
    classes = [np.asarray(g) for g in structure.groups]
    classes += [np.array([k]) for k in np.flatnonzero(~structure.covered)]
    return classes


@dataclass
class ApproxModel:
    """Coarse-class model plus one conditional model per coarse class.

    ``conditional_fits[l]`` is ``None`` for singleton classes and for classes
    that fell back to fixed within-class frequencies (stored in
    ``conditional_freqs[l]``).
    """

    classes: list
    n_categories: int
    coarse_fit: FitResult | None
    conditional_fits: list
    conditional_freqs: list
    diagnostics: list = field(default_factory=list)

    def predict_proba(self, X):
        X = check_design(X)
        n = X.shape[0]
        if self.coarse_fit is None:
            P1 = np.ones((n, 1))
        else:
            P1 = compute_probabilities(X, self.coarse_fit.beta)
        out = np.zeros((n, self.n_categories))
        for l, members in enumerate(self.classes):
            if members.size == 1:
                out[:, members[0]] = P1[:, l]
                continue
            fit_l = self.conditional_fits[l]
            if fit_l is not None:
                P2 = compute_probabilities(X, fit_l.beta)
            else:
                P2 = np.tile(self.conditional_freqs[l], (n, 1))
            out[:, members] = P1[:, l:l + 1] * P2
        return out


def _group_path_selected(X, Y, X_val, Y_val, n_gamma, min_ratio, config, penalized):
    K = Y.shape[1]
    structure = CoarseStructure([], K)
    grid = build_grid(X, Y, structure, n_gamma, 1, min_ratio, penalized)
    path = fit_group(X, Y, structure, grid.gammas, config, penalized)
    if X_val is None or X_val.shape[0] == 0:
        key = min(path.results)
        return path[key], "no validation rows; kept the largest gamma"
    _, _, res = select_model(path, X_val, Y_val)
    return res, None


def fit_approx(X, Y, structure, X_val, Y_val, n_gamma=20, min_ratio=0.01, config=None,
               penalized=None):
    """Two-step approximation built from group-lasso fits.

    Step one fits an ``L``-category model for the coarse class of each
    observation; step two fits, for each coarse class with at least two fine
    categories, a model for the fine category given that class using only
    the rows observed in it. Both steps pick ``gamma`` by validation
    deviance. Fine probabilities are the product of the two fitted
    probabilities.
    """
    config = config or SolverConfig()
    X, Y = _validate(X, Y, structure)
    X_val = check_design(X_val)
    Y_val = check_response(Y_val, X_val.shape[0])
    classes = coarse_partition(structure)
    K = Y.shape[1]
    M = np.zeros((K, len(classes)))
    for l, members in enumerate(classes):
        M[members, l] = 1.0
    diagnostics = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        coarse_fit = None
        if len(classes) > 1:
            coarse_fit, note = _group_path_selected(X, Y @ M, X_val, Y_val @ M, n_gamma,
                                                    min_ratio, config, penalized)
            if note:
                diagnostics.append(f"coarse model: {note}")
        fits, freqs = [], []
        for l, members in enumerate(classes):
            if members.size == 1:
                fits.append(None)
                freqs.append(None)
                continue
            rows = (Y[:, members].sum(axis=1) > 0)
            vrows = (Y_val[:, members].sum(axis=1) > 0)
            Ysub = Y[rows][:, members]
            counts = Ysub.sum(axis=0)
            if counts.sum() == 0:
                freqs.append(np.full(members.size, 1.0 / members.size))
                fits.append(None)
                diagnostics.append(f"class {l}: no training rows, using uniform frequencies")
                continue
            try:
                res, note = _group_path_selected(X[rows], Ysub, X_val[vrows],
                                                 Y_val[vrows][:, members], n_gamma, min_ratio,
                                                 config, penalized)
            except (ValueError, SolverError) as exc:
                freqs.append(counts / counts.sum())
                fits.append(None)
                diagnostics.append(f"class {l}: {exc}; using empirical frequencies")
                continue
            if note:
                diagnostics.append(f"class {l}: {note}")
            fits.append(res)
            freqs.append(None)
    return ApproxModel(classes, K, coarse_fit, fits, freqs, diagnostics)

