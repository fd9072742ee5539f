"""Robust structured regression by minimizing the L2 criterion (L2E)."""

__version__ = "0.1.0"

from .core import Theta, grad_beta, grad_tau, l2e_loss, lipschitz_beta, lipschitz_tau, residuals, spectral_norm, weights
from .data import Dataset, SimulationSpec, load_csv, simulate, standardize, write_csv
from .prox import ConstraintSpec, project_convex_cone, project_isotonic, project_l1_ball, soft_threshold
from .solver import FitConfig, FitResult, check_stationarity, fit, flag_outliers, objective, pseudo_observations
from .baselines import PathResult, isotonic_mle, convex_mle, lasso_constrained_ls, ols_fit, solution_path

__all__ = [
    "ConstraintSpec",
    "Dataset",
    "FitConfig",
    "FitResult",
    "PathResult",
    "SimulationSpec",
    "Theta",
    "check_stationarity",
    "convex_mle",
    "fit",
    "flag_outliers",
    "grad_beta",
    "grad_tau",
    "isotonic_mle",
    "l2e_loss",
    "lasso_constrained_ls",
    "lipschitz_beta",
    "lipschitz_tau",
    "load_csv",
    "objective",
    "ols_fit",
    "project_convex_cone",
    "project_isotonic",
    "project_l1_ball",
    "pseudo_observations",
    "residuals",
    "simulate",
    "soft_threshold",
    "solution_path",
    "spectral_norm",
    "standardize",
    "weights",
    "write_csv",
]
