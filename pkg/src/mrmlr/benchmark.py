"""Replication harness comparing the estimator with its competitors on simulated data.

Each replication draws one dataset from :mod:`mrmlr.simulate`, fits every
requested method on the training split, tunes it by validation deviance and
scores it on the test split against the true probabilities.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .baselines import fit_approx, fit_l1, l1_grid
from .exceptions import ConvergenceWarning
from .model import add_intercept
from .report import recovery_rates, resolution_report
from .selection import (
    build_grid,
    evaluate_metrics,
    probability_metrics,
    select_model,
)
from .simulate import SimulationSpec, generate_dataset
from .solver import FitPath, SolverConfig, fit_path

__all__ = ["BenchSettings", "METHODS", "BENCH_COLUMNS", "run_replication", "run_benchmark",
           "replication_seed", "summarize"]

METHODS = ("mrmlr", "group", "l1", "approx")

BENCH_COLUMNS = [
    "model", "p", "rep", "seed", "method", "hellinger", "kl", "error", "deviance", "dof",
    "gamma", "lambda", "zero_rows", "collapsed_pairs", "collapsed_pairs_relevant",
]


@dataclass(frozen=True)
class BenchSettings:
    """Data sizes and tuning-grid sizes for one benchmark run."""

    n_train: int = 500
    n_val: int = 500
    n_test: int = 2000
    n_gamma: int = 16
    n_lambda: int = 4
    min_ratio: float = 0.005
    base_seed: int = 0
    config: SolverConfig = field(default_factory=SolverConfig)


def replication_seed(base_seed, model_id, rep):
    """Dataset seed of one replication; distinct models and replications never share one."""
    return int(np.random.SeedSequence([base_seed, model_id, rep]).generate_state(1)[0])


def _path_column(path, j):
    out = FitPath(path.gammas, path.lambdas[j:j + 1])
    for (i, jj), res in path.results.items():
        if jj == j:
            out.results[(i, 0)] = res
    return out


def run_replication(model_id, p, rep, settings=None, methods=METHODS, n_threads=1):
    """Fit and score every method on one simulated dataset.

    Returns one dict per method with the keys of :data:`BENCH_COLUMNS`.
    Recovery columns are filled for the two methods with exact structure
    (``mrmlr`` and ``group``) and ``nan`` otherwise.
    """
    settings = settings or BenchSettings()
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    seed = replication_seed(settings.base_seed, model_id, rep)
    spec = SimulationSpec(model_id, p, settings.n_train, settings.n_val, settings.n_test, seed)
    data = generate_dataset(spec)
    S = spec.structure
    X, Xv, Xt = (add_intercept(a) for a in (data.X_train, data.X_val, data.X_test))
    # truth gets a zero intercept row so it lines up with the design
    beta_star = np.vstack([np.zeros((1, S.n_categories)), data.beta_star])
    cfg = settings.config
    rows = []

    def record(method, P_hat, beta=None, mask=None, gamma=np.nan, lam=np.nan):
        if beta is not None:
            m = evaluate_metrics(beta, Xt, data.Y_test, data.pi_true_test, mask)
            rep_ = resolution_report(beta, S, penalized=mask)
            rec = recovery_rates(rep_, beta_star, S)
        else:
            m = probability_metrics(P_hat, data.Y_test, data.pi_true_test)
            rec = dict.fromkeys(("zero_rows", "collapsed_pairs", "collapsed_pairs_relevant"),
                                np.nan)
        rows.append({
            "model": model_id, "p": p, "rep": rep, "seed": seed, "method": method,
            "hellinger": m.hellinger, "kl": m.kl_divergence, "error": m.classification_error,
            "deviance": m.deviance, "dof": m.degrees_of_freedom,
            "gamma": float(gamma), "lambda": float(lam), **rec,
        })

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        if "mrmlr" in methods or "group" in methods:
            grid = build_grid(X, data.Y_train, S, settings.n_gamma, settings.n_lambda,
                              settings.min_ratio, config=cfg)
            path = fit_path(X, data.Y_train, S, grid, cfg, n_threads=n_threads)
            if "mrmlr" in methods:
                g, lam, res = select_model(path, Xv, data.Y_val)
                record("mrmlr", None, res.beta, res.penalized, g, lam)
            if "group" in methods:
                # the lambda = 0 column is the row group lasso path
                g, lam, res = select_model(_path_column(path, len(grid.lambdas) - 1), Xv,
                                           data.Y_val)
                record("group", None, res.beta, res.penalized, g, lam)
        if "l1" in methods:
            gam = l1_grid(X, data.Y_train, settings.n_gamma, settings.min_ratio)
            lpath = fit_l1(X, data.Y_train, gam, cfg)
            g, lam, res = select_model(lpath, Xv, data.Y_val)
            record("l1", None, res.beta, res.penalized, g, lam)
        if "approx" in methods:
            model = fit_approx(X, data.Y_train, S, Xv, data.Y_val, settings.n_gamma,
                               settings.min_ratio, cfg)
            record("approx", model.predict_proba(Xt))
    return rows


def run_benchmark(model_ids, ps, n_reps, settings=None, methods=METHODS, n_threads=1,
                  on_row=None):
    """All replications of a benchmark, in (model, p, rep, method) order."""
    out = []
    for model_id in model_ids:
        for p in ps:
            for rep in range(n_reps):
                for row in run_replication(model_id, p, rep, settings, methods, n_threads):
                    out.append(row)
                    if on_row is not None:
                        on_row(row)
    return out


def summarize(rows, key="hellinger"):
    """Mean of ``key`` per (model, p, method)."""
    acc = {}
    for r in rows:
        acc.setdefault((r["model"], r["p"], r["method"]), []).append(r[key])
    return {k: float(np.mean(v)) for k, v in acc.items()}
