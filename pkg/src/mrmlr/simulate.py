"""Synthetic data from the six-model simulation design.

Predictors are Gaussian with AR(1) covariance ``Sigma[j, k] = 0.7 ** |j - k|``.
Eighteen predictors are relevant; ``s = 3 * (model_id - 1)`` of them take a
single value per coarse category ("coarse-only") and the remaining
``18 - s`` have independent values for all ``K`` categories. Nonzero
coefficients are ``N(0, 5)`` (variance 5). Responses are single-trial
multinomial draws.

Random streams are derived from one seed with :class:`numpy.random.SeedSequence`:
child 0 draws the coefficients and children 1-3 draw the training,
validation and test splits (each split draws its predictors, then its
responses, from its own PCG64 stream).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import compute_probabilities
from .prox import CoarseStructure

__all__ = [
    "SimulationSpec",
    "SimulatedDataset",
    "N_RELEVANT",
    "COEF_VARIANCE",
    "ar1_covariance",
    "default_structure",
    "generate_coefficients",
    "generate_dataset",
    "sample_categories",
]

N_RELEVANT = 18
COEF_VARIANCE = 5.0
AR_RHO = 0.7


def default_structure():
    """Four disjoint coarse categories of three fine categories each (K = 12)."""
    return CoarseStructure.consecutive(4, 3)


@dataclass(frozen=True)
class SimulationSpec:
    model_id: int
    p: int
    n_train: int = 500
    n_val: int = 500
    n_test: int = 10_000
    seed: int = 0
    structure: CoarseStructure = field(default_factory=default_structure)

    def __post_init__(self):
        if not 1 <= self.model_id <= 6:
            raise ValueError("model_id must be between 1 and 6")
        if self.p < N_RELEVANT:
            raise ValueError(f"p must be at least {N_RELEVANT}")
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def n_coarse_only(self):
        return 3 * (self.model_id - 1)

    @property
    def n_categories(self):
        return self.structure.n_categories


@dataclass
class SimulatedDataset:
    X_train: np.ndarray
    Y_train: np.ndarray
    X_val: np.ndarray
    Y_val: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray
    beta_star: np.ndarray
    pi_true_test: np.ndarray
    relevant: np.ndarray
    coarse_only: np.ndarray
    spec: SimulationSpec


def ar1_covariance(p, rho=AR_RHO):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(4)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def generate_coefficients(spec, rng=None):
    """Draw ``beta_star`` (p x K) for ``spec``.

    Returns ``(beta_star, relevant_rows, coarse_only_rows)`` with sorted row
    indices. ``rng`` defaults to the coefficient stream of ``spec.seed``.
    """
    if rng is None:
        rng = _streams(spec.seed)[0]
    p, K = spec.p, spec.n_categories
    sd = np.sqrt(COEF_VARIANCE)
    relevant = rng.choice(p, size=N_RELEVANT, replace=False)
    coarse = rng.choice(relevant, size=spec.n_coarse_only, replace=False)
    beta = np.zeros((p, K))
    coarse_set = set(coarse.tolist())
    uncovered = ~spec.structure.covered
    for j in sorted(relevant.tolist()):
        if j in coarse_set:
            for g in spec.structure.groups:
                beta[j, g] = sd * rng.standard_normal()
            beta[j, uncovered] = sd * rng.standard_normal(int(uncovered.sum()))
        else:
            beta[j] = sd * rng.standard_normal(K)
    return beta, np.sort(relevant), np.sort(coarse)


def sample_categories(probs, rng):
    """One single-trial multinomial draw per row by inverse-CDF sampling."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    labels = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(labels, probs.shape[1] - 1)


def _split(rng, n, chol, beta):
    X = rng.standard_normal((n, chol.shape[0])) @ chol.T
    probs = compute_probabilities(X, beta)
    labels = sample_categories(probs, rng)
    Y = np.zeros_like(probs)
    Y[np.arange(n), labels] = 1.0
    return X, Y, probs


def generate_dataset(spec):
    """Training, validation and test splits plus the true coefficients.

    Identical specs give bit-identical datasets.
    """
    coef_rng, train_rng, val_rng, test_rng = _streams(spec.seed)
    beta, relevant, coarse = generate_coefficients(spec, coef_rng)
    chol = np.linalg.cholesky(ar1_covariance(spec.p))
    X_train, Y_train, _ = _split(train_rng, spec.n_train, chol, beta)
    X_val, Y_val, _ = _split(val_rng, spec.n_val, chol, beta)
    X_test, Y_test, pi_test = _split(test_rng, spec.n_test, chol, beta)
    return SimulatedDataset(X_train, Y_train, X_val, Y_val, X_test, Y_test, beta, pi_test,
                            relevant, coarse, spec)
