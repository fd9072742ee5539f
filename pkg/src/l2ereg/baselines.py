"""Least-squares (MLE) counterparts of the L2E estimators, and solution paths."""
from dataclasses import dataclass, replace

import numpy as np

from . import core
from .core import Theta
from .errors import InvalidInputError, L2EError, NumericalFailureError, SingularDesignError
from .prox import ConstraintSpec, project_convex_cone, project_isotonic, project_l1_ball
from .solver import FitConfig, fit

ESTIMATORS = ("lasso_mle", "l2e_sparse")


def ols_fit(X, y):
    """Ordinary least squares; raises :class:`SingularDesignError` when X lacks full column rank."""
    X = core.as_matrix(X)
    y = core.as_vector(y, "y")
    if X.shape[0] != y.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError(f"design of shape {X.shape} is rank deficient")
    Q, R = np.linalg.qr(X)
    return np.linalg.solve(R, Q.T @ y)


def isotonic_mle(y):
    return project_isotonic(y)


def convex_mle(y, sites=None):
    return project_convex_cone(y, sites)


def lasso_constrained_ls(X, y, radius, beta0=None, max_iter=100_000, tol=1e-10, trace=None):
    """Minimize ``||y - X beta||^2`` subject to ``||beta||_1 <= radius``.

    Projected gradient with step ``1 / sigma(X)^2``; stops once a step moves
    beta by less than ``tol * (1 + ||beta||)``.  If ``trace`` is a list, the
    objective after every iteration is appended to it.
    """
    X = core.as_matrix(X)
    y = core.as_vector(y, "y")
    if not np.isfinite(radius) or radius < 0:
        raise InvalidInputError(f"radius must be nonnegative, got {radius!r}")
    p = X.shape[1]
    if radius == 0:
        return np.zeros(p)
    try:
        ols = ols_fit(X, y)
    except SingularDesignError:
        ols = None
    if ols is not None and np.sum(np.abs(ols)) <= radius:
        return ols
    sigma = core.spectral_norm(X)
    if sigma == 0:
        return np.zeros(p)
    step = 1.0 / sigma**2
    beta = np.zeros(p) if beta0 is None else project_l1_ball(core.as_vector(beta0, "beta0"), radius)
    Xty = X.T @ y
    XtX = X.T @ X
    for it in range(max_iter):
        grad = XtX @ beta - Xty
        new = project_l1_ball(beta - step * grad, radius)
        if not np.all(np.isfinite(new)):
            raise NumericalFailureError("projected gradient diverged", it)
        moved = np.linalg.norm(new - beta)
        beta = new
        if trace is not None:
            trace.append(0.5 * float(np.sum((y - X @ beta) ** 2)))
        if moved <= tol * (1.0 + np.linalg.norm(beta)):
            break
    return beta


@dataclass(frozen=True)
class PathResult:
    """Coefficients along a shrinkage path; column k belongs to ``shrinkage_grid[k]``."""

    shrinkage_grid: np.ndarray
    coefficient_matrix: np.ndarray
    estimator_tag: str
    radii: np.ndarray

    def rows(self):
        """Long format: ``(estimator, s, coefficient_index, value)``."""
        p, g = self.coefficient_matrix.shape
        for k in range(g):
            for j in range(p):
                yield self.estimator_tag, float(self.shrinkage_grid[k]), j, float(self.coefficient_matrix[j, k])


class PathError(L2EError):
    def __init__(self, index, cause):
        self.index = index
        super().__init__(f"path fit failed at grid index {index}: {cause}")


def solution_path(dataset, estimator_tag, grid_size=50, cfg=None, warm_start=True):
    """Constrained fits on radii ``t_k = k / (G - 1) * ||beta_full||_1``.

    ``beta_full`` is the unconstrained estimate (OLS for ``lasso_mle``, the
    unconstrained L2E fit for ``l2e_sparse``).  The shrinkage factor of each
    column is ``||beta(t_k)||_1 / ||beta_full||_1``; the last column is
    ``beta_full`` itself.
    """
    if estimator_tag not in ESTIMATORS:
        raise InvalidInputError(f"unknown estimator {estimator_tag!r}; expected one of {ESTIMATORS}")
    if int(grid_size) < 2:
        raise InvalidInputError("grid_size must be at least 2")
    cfg = cfg or FitConfig()
    X, y = dataset.X, dataset.y
    if estimator_tag == "lasso_mle":
        full = ols_fit(X, y)
        full_tau = None
    else:
        res = fit(dataset, ConstraintSpec(), cfg)
        full, full_tau = np.array(res.beta), res.tau
    norm = float(np.sum(np.abs(full)))
    radii = np.linspace(0.0, norm, int(grid_size))
    coefs = np.zeros((X.shape[1], radii.size))
    prev_beta, prev_tau = None, None
    for k, t in enumerate(radii):
        if k == 0:
            continue
        if k == radii.size - 1:
            coefs[:, k] = full
            break
        try:
            if estimator_tag == "lasso_mle":
                beta = lasso_constrained_ls(X, y, t, beta0=prev_beta if warm_start else None)
            else:
                fcfg = cfg
                if warm_start and prev_beta is not None:
                    fcfg = replace(cfg, init=Theta(prev_beta, prev_tau))
                res = fit(dataset, ConstraintSpec("l1_ball", radius=float(t)), fcfg)
                beta, prev_tau = np.array(res.beta), res.tau
        except L2EError as exc:
            raise PathError(k, exc) from exc
        coefs[:, k] = beta
        prev_beta = beta
    s = np.sum(np.abs(coefs), axis=0) / norm if norm > 0 else np.zeros(radii.size)
    return PathResult(s, coefs, estimator_tag, radii)

