"""Accelerated proximal gradient fits of the doubly penalized estimator.

The estimator minimizes

    G(beta) + gamma * sum_j ||beta[j]|| + lambda * sum_j sum_l w_l ||D beta[j, A_l]||

over penalized rows ``j``. Each iteration takes a gradient step from a search
point, applies the row-wise composite prox and accepts the step size once the
quadratic model at the search point majorizes ``G`` at the new iterate
(halving otherwise; each iteration first tries twice the last accepted step).
With acceleration the search point extrapolates from the last two iterates
and momentum is dropped whenever the objective would increase.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceWarning, SolverError
from .model import (
    _bregman_gap,
    _fast_nll,
    _fast_nll_grad,
    check_design,
    check_response,
    default_penalized,
    nll_and_gradient,
)
from .prox import (
    _multires_rows,
    collapse_groups,
    multires_penalty,
    prox_rows,
    soft_threshold_l1,
)

__all__ = [
    "SolverConfig",
    "FitResult",
    "FitPath",
    "MultiresPenalty",
    "L1Penalty",
    "objective",
    "fit",
    "fit_path",
    "fit_collapsed",
    "kkt_residual",
    "proximal_gradient",
]


@dataclass(frozen=True)
class SolverConfig:
    """Stopping and step-size controls.

    ``rel_tol`` stops on the relative objective change between consecutive
    iterates. With ``kkt_check`` the optimality residual is also required to
    be at most ``kkt_tol`` before stopping; otherwise iteration continues
    (re-checking every ``kkt_every`` iterations) up to ``max_iters``.
    """

    max_iters: int = 2000
    rel_tol: float = 1e-8
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    step_growth: float = 2.0
    acceleration: bool = True
    kkt_check: bool = True
    kkt_tol: float = 1e-6
    kkt_every: int = 10
    min_step: float = 1e-20
    bcd_tol: float = 1e-10
    bcd_max_sweeps: int = 500

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.step_growth < 1:
            raise ValueError("step_growth must be at least 1")


@dataclass
class FitResult:
    beta: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    kkt_residual: float
    gamma: float
    lam: float
    penalized: np.ndarray
    step: float = float("nan")

    @property
    def objective(self):
        return float(self.objective_trace[-1])


@dataclass
class FitPath:
    """Fits over a ``(gamma, lambda)`` grid keyed by grid indices ``(i, j)``."""

    gammas: np.ndarray
    lambdas: np.ndarray
    results: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.results[key]

    def __len__(self):
        return len(self.results)

    def cells(self):
        """Yield ``((i, j), result)`` in grid order for successful cells."""
        for key in sorted(self.results):
            yield key, self.results[key]

    def objectives(self):
        out = np.full((len(self.gammas), len(self.lambdas)), np.nan)
        for (i, j), res in self.results.items():
            out[i, j] = res.objective
        return out


class MultiresPenalty:
    """Row group lasso plus multiresolution penalty on the penalized rows."""

    def __init__(self, gamma, lam, structure, penalized, bcd_tol=1e-10, bcd_max_sweeps=500):
        if gamma < 0 or lam < 0:
            raise ValueError("gamma and lambda must be nonnegative")
        self.gamma = float(gamma)
        self.lam = float(lam)
        self.structure = structure
        self.penalized = np.asarray(penalized, dtype=bool)
        self.bcd_tol = bcd_tol
        self.bcd_max_sweeps = bcd_max_sweeps

    def value(self, beta):
        rows = beta[self.penalized]
        val = self.gamma * float(np.sum(np.linalg.norm(rows, axis=1)))
        if self.lam:
            val += self.lam * multires_penalty(rows, self.structure)
        return val

    def prox(self, V, tau, state=None):
        out = V.copy()
        zeta0 = None
        if state is not None:
            zeta, tau_old = state
            zeta0 = zeta * (tau / tau_old)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            rows, zeta = prox_rows(V[self.penalized], tau * self.gamma, tau * self.lam,
                                   self.structure, self.bcd_tol, self.bcd_max_sweeps, zeta0)
        out[self.penalized] = rows
        return out, (None if zeta is None else (zeta, tau))

    def residual(self, beta, grad):
        return kkt_residual_from_gradient(beta, grad, self.structure, self.gamma, self.lam,
                                          self.penalized)


class L1Penalty:
    """Elementwise lasso penalty ``gamma * sum |beta[j, k]|`` on penalized rows."""

    def __init__(self, gamma, penalized):
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        self.gamma = float(gamma)
        self.penalized = np.asarray(penalized, dtype=bool)

    def value(self, beta):
        return self.gamma * float(np.sum(np.abs(beta[self.penalized])))

    def prox(self, V, tau, state=None):
        out = V.copy()
        out[self.penalized] = soft_threshold_l1(V[self.penalized], tau * self.gamma)
        return out, None

    def residual(self, beta, grad):
        r = np.abs(grad).copy()
        B, g = beta[self.penalized], grad[self.penalized]
        rp = np.where(B != 0, np.abs(g + self.gamma * np.sign(B)),
                      np.maximum(np.abs(g) - self.gamma, 0.0))
        r[self.penalized] = rp
        return float(np.max(np.linalg.norm(r, axis=1))) if r.size else 0.0


class CollapsedConstraint:
    """Indicator of penalized rows that are constant within every group.

    The prox is the orthogonal projection onto that subspace (overlapping
    groups share one value over their union), so the loop solves the
    ``lambda -> infinity`` limit at ``gamma = 0``.
    """

    def __init__(self, structure, penalized):
        self.structure = structure
        self.penalized = np.asarray(penalized, dtype=bool)

    def value(self, beta):
        return 0.0

    def prox(self, V, tau, state=None):
        out = V.copy()
        out[self.penalized] = collapse_groups(V[self.penalized], self.structure)
        return out, None

    def residual(self, beta, grad):
        r = np.array(grad, dtype=float, copy=True)
        r[self.penalized] = collapse_groups(grad[self.penalized], self.structure)
        return float(np.max(np.linalg.norm(r, axis=1))) if r.size else 0.0


def _resolve_penalized(X, penalized):
    if penalized is None:
        return default_penalized(X)
    mask = np.asarray(penalized)
    if mask.dtype != bool:
        idx = mask.astype(int)
        mask = np.zeros(X.shape[1], dtype=bool)
        mask[idx] = True
    if mask.shape != (X.shape[1],):
        raise ValueError("penalized mask must have one entry per column of X")
    return mask


def _validate(X, Y, structure):
    X = check_design(X)
    Y = check_response(Y, X.shape[0])
    if structure is not None and structure.n_categories != Y.shape[1]:
        raise ValueError(
            f"structure has {structure.n_categories} categories but response has {Y.shape[1]}"
        )
    return X, Y


def objective(X, Y, beta, structure, gamma, lam, penalized=None):
    """Penalized objective value at ``beta``."""
    X, Y = _validate(X, Y, structure)
    pen = MultiresPenalty(gamma, lam, structure, _resolve_penalized(X, penalized))
    return nll_and_gradient(X, Y, beta)[0] + pen.value(np.asarray(beta, float))


def proximal_gradient(X, Y, penalty, config, beta0):
    """Run the (accelerated) proximal gradient loop for any penalty object.

    ``penalty`` must provide ``value(beta)``, ``prox(V, tau, state)`` returning
    ``(beta, state)`` and ``residual(beta, grad)``.

    Returns ``(beta, trace, iterations, converged, residual, step)``.
    """
    beta = np.array(beta0, dtype=float, copy=True)
    trials = Y.sum(axis=1)
    G, grad_beta, probs_beta = _fast_nll_grad(X, Y, trials, beta, return_probs=True)
    F = G + penalty.value(beta)
    if not math.isfinite(F):
        raise SolverError("objective is not finite at the starting point")
    trace = [F]
    tau = config.initial_step
    prev = beta
    t_k = 1.0
    state = None
    converged = False
    residual = math.nan
    next_kkt = 0

    def step_from(z, gz, Pz, tau, state):
        # the majorization test uses the exact Bregman gap of G, so rounding
        # in G itself cannot let an over-long step through
        while True:
            cand, new_state = penalty.prox(z - tau * gz, tau, state)
            d = cand - z
            gap, err = _bregman_gap(X, trials, Pz, d)
            if gap <= float(np.sum(d * d)) / (2.0 * tau) + err:
                return cand, _fast_nll(X, Y, trials, cand), tau, new_state
            tau *= config.backtrack_factor
            if tau < config.min_step:
                raise SolverError(f"backtracking failed: step size fell below {config.min_step:g}")

    def gradient_at_beta():
        nonlocal grad_beta, probs_beta
        if grad_beta is None:
            _, grad_beta, probs_beta = _fast_nll_grad(X, Y, trials, beta, return_probs=True)
        return grad_beta

    it = 0
    for it in range(1, config.max_iters + 1):
        if it > 1:
            tau *= config.step_growth
        momentum = 0.0
        if config.acceleration and it > 1:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_k * t_k))
            momentum = (t_k - 1.0) / t_next
            t_k = t_next
        if momentum > 0:
            z = beta + momentum * (beta - prev)
            _, gz, Pz = _fast_nll_grad(X, Y, trials, z, return_probs=True)
        else:
            z, gz = beta, gradient_at_beta()
            Pz = probs_beta
        cand, Gc, tau, new_state = step_from(z, gz, Pz, tau, state)
        Fc = Gc + penalty.value(cand)
        if momentum > 0 and Fc > F:
            t_k = 1.0
            g_beta = gradient_at_beta()
            cand, Gc, tau, new_state = step_from(beta, g_beta, probs_beta, tau, state)
            Fc = Gc + penalty.value(cand)
        elif momentum > 0 and float(np.sum((z - cand) * (cand - beta))) > 0:
            # objective differences vanish into rounding near the optimum;
            # the gradient-mapping test still detects momentum overshoot
            t_k = 1.0
        if not math.isfinite(Fc):
            raise SolverError(f"objective became non-finite at iteration {it}")
        prev, beta, state = beta, cand, new_state
        F_old, F, G, grad_beta, probs_beta = F, Fc, Gc, None, None
        trace.append(F)
        if abs(F_old - F) <= config.rel_tol * max(abs(F_old), 1e-300):
            if not config.kkt_check:
                converged = True
                break
            if it >= next_kkt:
                residual = penalty.residual(beta, gradient_at_beta())
                if residual <= config.kkt_tol:
                    converged = True
                    break
                next_kkt = it + config.kkt_every
    if not math.isfinite(residual) or not converged:
        residual = penalty.residual(beta, gradient_at_beta())
    return beta, np.asarray(trace), it, converged, residual, tau


def fit(X, Y, structure, gamma, lam, config=None, warm_start=None, penalized=None):
    """Fit the penalized multinomial model at one ``(gamma, lambda)``.

    Parameters
    ----------
    X : (n, p) array
        Design matrix; a leading all-ones column is treated as the intercept
        and left unpenalized unless ``penalized`` says otherwise.
    Y : (n, K) array
        Category counts.
    structure : CoarseStructure
        Coarse categories; ``CoarseStructure([], K)`` gives the plain row
        group lasso.
    gamma, lam : float
        Group lasso and multiresolution tuning parameters.
    config : SolverConfig, optional
    warm_start : (p, K) array, optional
        Starting coefficients; zero by default.
    penalized : boolean mask or index array, optional

    Returns
    -------
    FitResult
    """
    config = config or SolverConfig()
    X, Y = _validate(X, Y, structure)
    mask = _resolve_penalized(X, penalized)
    p, K = X.shape[1], Y.shape[1]
    beta0 = np.zeros((p, K)) if warm_start is None else np.asarray(warm_start, dtype=float)
    if beta0.shape != (p, K):
        raise ValueError(f"warm start has shape {beta0.shape}, expected {(p, K)}")
    penalty = MultiresPenalty(gamma, lam, structure, mask, config.bcd_tol, config.bcd_max_sweeps)
    beta, trace, iters, converged, residual, step = proximal_gradient(X, Y, penalty, config, beta0)
    if not converged:
        warnings.warn(
            f"fit at gamma={gamma:.4g}, lambda={lam:.4g} stopped after {iters} iterations "
            f"(kkt residual {residual:.2e})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return FitResult(beta, trace, iters, converged, float(residual), float(gamma), float(lam),
                     mask, step)


def fit_collapsed(X, Y, structure, config=None, penalized=None):
    """Unpenalized fit with every penalized row constant within each group.

    This is the ``gamma = 0`` solution for every ``lambda`` at or above the
    collapse threshold. ``FitResult.lam`` is ``inf``.
    """
    config = config or SolverConfig()
    X, Y = _validate(X, Y, structure)
    mask = _resolve_penalized(X, penalized)
    beta0 = np.zeros((X.shape[1], Y.shape[1]))
    beta, trace, iters, converged, residual, step = proximal_gradient(
        X, Y, CollapsedConstraint(structure, mask), config, beta0)
    if not converged:
        warnings.warn(f"collapsed fit stopped after {iters} iterations "
                      f"(residual {residual:.2e}); the maximum likelihood estimate may not exist",
                      ConvergenceWarning, stacklevel=2)
    return FitResult(beta, trace, iters, converged, float(residual), 0.0, math.inf, mask, step)


def _row_residual_zero(G, structure, gamma, lam, tol):
    inner, _ = _multires_rows(-G, lam, structure, tol, 10_000, None)
    return np.maximum(np.linalg.norm(inner, axis=1) - gamma, 0.0)


def _row_residual_nonzero(B, G, structure, gamma, lam, tol):
    target = -(G + gamma * B / np.linalg.norm(B, axis=1, keepdims=True))
    L = structure.n_groups
    if L == 0 or lam == 0:
        return np.linalg.norm(target, axis=1)
    collapsed = np.zeros((B.shape[0], L), dtype=bool)
    for l, (g, w) in enumerate(zip(structure.groups, structure.weights)):
        sub = B[:, g]
        collapsed[:, l] = np.all(sub == sub[:, :1], axis=1)
        live = ~collapsed[:, l]
        if np.any(live):
            c = sub[live] - sub[live].mean(axis=1, keepdims=True)
            target[np.ix_(np.flatnonzero(live), g)] -= lam * w * c / np.linalg.norm(
                c, axis=1, keepdims=True)
    out = np.empty(B.shape[0])
    patterns, inverse = np.unique(collapsed, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pattern in enumerate(patterns):
        rows = np.flatnonzero(inverse == k)
        free = structure.subset(np.flatnonzero(pattern))
        inner, _ = _multires_rows(target[rows], lam, free, tol, 10_000, None)
        out[rows] = np.linalg.norm(inner, axis=1)
    return out


def kkt_residual_from_gradient(beta, grad, structure, gamma, lam, penalized, tol=1e-13):
    """Largest row distance from ``-grad`` to the penalty subdifferential at ``beta``.

    For each penalized row the free part of the subdifferential (unit ball of
    the row norm at a zero row, centered balls of collapsed groups) is
    optimized away through the dual of the multiresolution prox, which gives
    the distance exactly. Unpenalized rows contribute ``||grad[j]||``.
    """
    beta = np.asarray(beta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    res = np.linalg.norm(grad, axis=1)
    idx = np.flatnonzero(penalized)
    if idx.size:
        B, G = beta[idx], grad[idx]
        zero = np.all(B == 0, axis=1)
        r = np.empty(idx.size)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            if np.any(zero):
                r[zero] = _row_residual_zero(G[zero], structure, gamma, lam, tol)
            if np.any(~zero):
                r[~zero] = _row_residual_nonzero(B[~zero], G[~zero], structure, gamma, lam, tol)
        res[idx] = r
    return float(res.max()) if res.size else 0.0


def kkt_residual(X, Y, beta, structure, gamma, lam, penalized=None):
    """First-order optimality residual of ``beta``; zero exactly at a minimizer."""
    X, Y = _validate(X, Y, structure)
    mask = _resolve_penalized(X, penalized)
    _, grad = nll_and_gradient(X, Y, beta)
    return kkt_residual_from_gradient(beta, grad, structure, gamma, lam, mask)


def _sweep_row(X, Y, structure, gamma, lambdas, config, penalized, start, first_result):
    out, failed = {}, {}
    warm = first_result.beta if first_result is not None else start
    for j, lam in enumerate(lambdas):
        if j == 0 and first_result is not None:
            out[0] = first_result
            continue
        try:
            res = fit(X, Y, structure, gamma, lam, config, warm, penalized)
        except SolverError as exc:
            failed[j] = str(exc)
            continue
        out[j] = res
        warm = res.beta
    return out, failed


def fit_path(X, Y, structure, grid, config=None, penalized=None, n_threads=1):
    """Fit every cell of a tuning grid with warm starts.

    For each ``gamma`` (descending) the ``lambda`` values are swept in
    descending order, each fit starting from the previous cell of the same
    row. The first cell of a row starts from the first cell of the previous
    row. Once those first cells are computed, rows are independent and are
    distributed over ``n_threads`` worker threads; results do not depend on
    the thread count. Cells whose fit raises :class:`SolverError` are
    recorded in ``FitPath.failures``.
    """
    config = config or SolverConfig()
    X, Y = _validate(X, Y, structure)
    mask = _resolve_penalized(X, penalized)
    gammas = np.asarray(grid.gammas, dtype=float)
    lambdas = np.asarray(grid.lambdas, dtype=float)
    if gammas.size == 0 or lambdas.size == 0:
        raise ValueError("tuning grid is empty")
    path = FitPath(gammas, lambdas)
    firsts = []
    warm = None
    for i, gamma in enumerate(gammas):
        try:
            res = fit(X, Y, structure, gamma, lambdas[0], config, warm, mask)
            warm = res.beta
        except SolverError as exc:
            path.failures[(i, 0)] = str(exc)
            res = None
        firsts.append((res, warm))

    def run(i):
        res, start = firsts[i]
        return _sweep_row(X, Y, structure, gammas[i], lambdas, config, mask, start, res)

    if n_threads > 1 and len(gammas) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            rows = list(pool.map(run, range(len(gammas))))
    else:
        rows = [run(i) for i in range(len(gammas))]
    for i, (out, failed) in enumerate(rows):
        for j, res in out.items():
            path.results[(i, j)] = res
        for j, msg in failed.items():
            path.failures[(i, j)] = msg
    return path

