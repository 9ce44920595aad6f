"""Multinomial logistic regression with a row group lasso penalty and a
multiresolution penalty that fuses coefficients within coarse categories.

The main entry points are :func:`fit` for one ``(gamma, lambda)`` pair,
:func:`fit_path` for a warm-started tuning grid built by :func:`build_grid`,
and :func:`select_model` for validation-deviance selection.
"""
from .baselines import ApproxModel, coarse_partition, fit_approx, fit_group, fit_l1, l1_grid
from .exceptions import ConvergenceWarning, SolverError
from .fileio import GroupSpec, load_path, parse_group_spec, read_group_spec, save_path
from .model import (
    add_intercept,
    compute_probabilities,
    labels_to_counts,
    negative_log_likelihood,
    nll_and_gradient,
    nll_gradient,
)
from .prox import (
    CoarseStructure,
    group_soft_threshold,
    prox_composite,
    prox_multires_nonoverlapping,
    prox_multires_overlapping,
    soft_threshold_l1,
)
from .report import ResolutionReport, recovery_rates, resolution_report
from .selection import (
    MetricsReport,
    TuningGrid,
    build_grid,
    collapse_lambda,
    cross_validate,
    evaluate_metrics,
    gamma_max,
    lambda_max,
    select_model,
)
from .simulate import SimulatedDataset, SimulationSpec, generate_coefficients, generate_dataset
from .solver import (
    FitPath,
    FitResult,
    SolverConfig,
    fit,
    fit_collapsed,
    fit_path,
    kkt_residual,
    objective,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxModel", "CoarseStructure", "ConvergenceWarning", "FitPath", "FitResult", "GroupSpec",
    "MetricsReport", "ResolutionReport", "SimulatedDataset", "SimulationSpec", "SolverConfig",
    "SolverError", "TuningGrid", "add_intercept", "build_grid", "coarse_partition", "collapse_lambda",
    "compute_probabilities", "cross_validate", "evaluate_metrics", "fit", "fit_approx", "fit_collapsed",
    "fit_group", "fit_l1", "fit_path", "gamma_max", "generate_coefficients", "generate_dataset",
    "group_soft_threshold", "kkt_residual", "l1_grid", "labels_to_counts", "lambda_max",
    "load_path", "negative_log_likelihood", "nll_and_gradient", "nll_gradient", "objective",
    "parse_group_spec", "prox_composite", "prox_multires_nonoverlapping",
    "prox_multires_overlapping", "read_group_spec", "recovery_rates", "resolution_report",
    "save_path", "select_model", "soft_threshold_l1",
]
