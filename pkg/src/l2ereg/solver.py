"""Inexact block coordinate descent for L2E structured regression.

Each outer iteration takes ``n_beta`` proximal-gradient steps on the
coefficients with the precision held fixed, then ``n_tau`` projected-gradient
steps on the precision with the coefficients held fixed.

Step sizes for beta are expressed relative to the curvature scale
``(tau^3 / n) sqrt(2/pi)`` of the loss, so a relative step of 1 with
``X = I`` turns the beta update into the pseudo-observation update
``beta+ = prox(W y + (I - W) beta)``.  The automatic relative step is
``1 / (g_curvature(r_star(tau), tau) * sigma(X)^2)``, which is exactly
``1 / lipschitz_beta`` in absolute units.  Steps for tau are absolute.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import median_filter

from . import core
from .core import Theta, SQRT_2_OVER_PI
from .data import Dataset
from .errors import (
    DimensionMismatchError,
    IncompatibleConstraintError,
    InvalidBoundsError,
    InvalidInputError,
    NumericalFailureError,
    SingularDesignError,
)
from .prox import ConstraintSpec, convex_active_set, is_feasible, penalty, project_box, prox

#: flag residuals beyond three noise standard deviations
DEFAULT_OUTLIER_THRESHOLD = math.exp(-4.5)
MAD_SCALE = 1.4826
MEDIAN_WINDOW = 5
#: slack allowed on a single step before the safeguard halves it
DESCENT_SLACK = 1e-13


@dataclass(frozen=True)
class FitConfig:
    """Solver controls.

    ``step_beta`` / ``step_tau`` are ``"auto"`` (Lipschitz-based, recomputed
    every outer iteration) or a positive float.  ``init`` is ``"ols"``,
    ``"zero"`` or a :class:`Theta`.
    """

    n_beta: int = 5
    n_tau: int = 5
    tau_min: float = 1e-2
    tau_max: float = 1e2
    max_outer_iter: int = 500
    tol: float = 1e-8
    step_beta: object = "auto"
    step_tau: object = "auto"
    init: object = "ols"
    outlier_weight_threshold: float = DEFAULT_OUTLIER_THRESHOLD
    seed: int = 0
    max_halvings: int = 30

    def __post_init__(self):
        if int(self.n_beta) < 1 or int(self.n_tau) < 1:
            raise InvalidInputError("n_beta and n_tau must be positive")
        if int(self.max_outer_iter) < 1:
            raise InvalidInputError("max_outer_iter must be positive")
        if not (0 < self.tau_min < self.tau_max and np.isfinite(self.tau_max)):
            raise InvalidBoundsError(f"need 0 < tau_min < tau_max, got [{self.tau_min}, {self.tau_max}]")
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if not 0 < self.outlier_weight_threshold < 1:
            raise InvalidInputError("outlier_weight_threshold must lie in (0, 1)")
        for name in ("step_beta", "step_tau"):
            s = getattr(self, name)
            if s != "auto" and not (isinstance(s, (int, float)) and np.isfinite(s) and s > 0):
                raise InvalidInputError(f"{name} must be 'auto' or a positive number, got {s!r}")
        if not (self.init in ("ols", "zero") or isinstance(self.init, Theta)):
            raise InvalidInputError(f"init must be 'ols', 'zero' or a Theta, got {self.init!r}")

    def as_dict(self):
        d = {
            "n_beta": int(self.n_beta),
            "n_tau": int(self.n_tau),
            "tau_min": float(self.tau_min),
            "tau_max": float(self.tau_max),
            "max_outer_iter": int(self.max_outer_iter),
            "tol": float(self.tol),
            "step_beta": self.step_beta if self.step_beta == "auto" else float(self.step_beta),
            "step_tau": self.step_tau if self.step_tau == "auto" else float(self.step_tau),
            "outlier_weight_threshold": float(self.outlier_weight_threshold),
            "seed": int(self.seed),
            "max_halvings": int(self.max_halvings),
        }
        if isinstance(self.init, Theta):
            d["init"] = {"beta": self.init.beta.tolist(), "tau": self.init.tau}
        else:
            d["init"] = self.init
        return d


@dataclass(frozen=True)
class FitResult:
    theta_hat: Theta
    weights: np.ndarray
    objective_trace: np.ndarray
    converged: bool
    outer_iterations: int
    outlier_flags: np.ndarray
    pseudo_response: np.ndarray
    fitted: np.ndarray
    step_halvings: int = 0
    warnings: tuple = field(default_factory=tuple)

    @property
    def beta(self):
        return self.theta_hat.beta

    @property
    def tau(self):
        return self.theta_hat.tau


class _Design:
    """Matrix-vector products with a shortcut for the identity design."""

    def __init__(self, X):
        self.X = X
        self.identity = X.shape[0] == X.shape[1] and _is_identity(X)

    def mul(self, beta):
        return beta.copy() if self.identity else self.X @ beta

    def rmul(self, v):
        return v.copy() if self.identity else self.X.T @ v


def _is_identity(X):
    n = X.shape[0]
    return bool(np.all(np.diag(X) == 1.0) and np.count_nonzero(X) == n)


def objective(X, y, theta, spec):
    """``h(beta, tau)`` plus the structural term; +inf when beta violates an indicator constraint."""
    r = core.residuals(X, y, theta.beta)
    return core.l2e_loss(r, theta.tau) + penalty(spec, theta.beta)


def pseudo_observations(y, beta, w):
    """``z = W y + (I - W) beta``: observed response blended with the current prediction."""
    y = core.as_vector(y, "y")
    beta = core.as_vector(beta, "beta")
    w = core.as_vector(w, "w")
    if not (y.shape == beta.shape == w.shape):
        raise InvalidInputError(f"length mismatch: y {y.size}, beta {beta.size}, w {w.size}")
    return w * y + (1.0 - w) * beta


def flag_outliers(w, threshold=DEFAULT_OUTLIER_THRESHOLD):
    if not 0 < threshold < 1:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {threshold!r}")
    return np.asarray(w) < threshold


class _Problem:
    """Per-fit state shared by the block updates (design, constraint, caches)."""

    def __init__(self, X, y, spec, cfg, sigma_x=None):
        self.design = _Design(X)
        self.y = y
        self.n = y.size
        self.spec = spec
        self.cfg = cfg
        self.sigma_x = core.spectral_norm(X, seed=cfg.seed) if sigma_x is None else sigma_x
        self.grid = core.tau_grid(cfg.tau_min, cfg.tau_max, 128)
        self.knots = None
        self.halvings = 0

    def residuals(self, beta):
        return self.y - self.design.mul(beta)

    def h(self, beta, tau):
        return core._loss(self.residuals(beta), tau)

    def objective(self, beta, tau):
        return self.h(beta, tau) + penalty(self.spec, beta)

    def prox(self, v, step):
        if self.spec.kind == "convex":
            u, self.knots = convex_active_set(v, self.spec.site_array(v.size), self.knots)
            return u
        return prox(self.spec, v, step)

    def beta_step_size(self, tau):
        """Relative step, in units of the inverse curvature scale."""
        if self.cfg.step_beta != "auto":
            return float(self.cfg.step_beta)
        g = abs(core.g_curvature(core.r_star(tau), tau))
        return 1.0 / (g * self.sigma_x**2) if self.sigma_x > 0 else 1.0

    def tau_step_size(self, r):
        if self.cfg.step_tau != "auto":
            return float(self.cfg.step_tau)
        return 1.0 / core._lipschitz_tau(r, self.grid)

    def beta_step(self, beta, tau, rel_step, it=None):
        """One proximal-gradient step on beta; returns the new iterate."""
        scale = tau**3 / self.n * SQRT_2_OVER_PI
        r = self.residuals(beta)
        w = np.exp(-0.5 * (tau * r) ** 2)
        direction = self.design.rmul(w * r)
        with np.errstate(over="ignore", invalid="ignore"):
            v = beta + rel_step * direction
            abs_step = rel_step / scale
        if not (np.all(np.isfinite(v)) and np.isfinite(abs_step)):
            raise NumericalFailureError("non-finite coefficients in beta update", it)
        cand = self.prox(v, abs_step)
        if not np.all(np.isfinite(cand)):
            raise NumericalFailureError("non-finite coefficients in beta update", it)
        return cand

    def tau_step(self, r, tau, step, it=None):
        w = np.exp(-0.5 * (tau * r) ** 2)
        cand = project_box(tau - step * core._grad_tau(r, w, tau), self.cfg.tau_min, self.cfg.tau_max)
        if not np.isfinite(cand):
            raise NumericalFailureError("non-finite precision in tau update", it)
        return cand

    def beta_block(self, beta, tau, it=None):
        """``n_beta`` safeguarded steps; returns ``(beta, last_move)``."""
        rel = self.beta_step_size(tau)
        f = self.objective(beta, tau)
        move = 0.0
        for _ in range(int(self.cfg.n_beta)):
            step = rel
            for _ in range(int(self.cfg.max_halvings) + 1):
                cand = self.beta_step(beta, tau, step, it)
                fc = self.objective(cand, tau)
                if fc <= f + DESCENT_SLACK * (1.0 + abs(f)):
                    break
                step *= 0.5
                self.halvings += 1
            else:
                cand, fc = beta, f
            move = float(np.linalg.norm(cand - beta))
            beta, f = cand, fc
        return beta, move

    def tau_block(self, beta, tau, it=None):
        r = self.residuals(beta)
        step0 = self.tau_step_size(r)
        f = core._loss(r, tau)
        move = 0.0
        for _ in range(int(self.cfg.n_tau)):
            step = step0
            for _ in range(int(self.cfg.max_halvings) + 1):
                cand = self.tau_step(r, tau, step, it)
                fc = core._loss(r, cand)
                if fc <= f + DESCENT_SLACK * (1.0 + abs(f)):
                    break
                step *= 0.5
                self.halvings += 1
            else:
                cand, fc = tau, f
            move = abs(cand - tau)
            tau, f = cand, fc
        return tau, move


def _check_compatible(dataset, spec):
    if spec.is_shape:
        X = dataset.X
        if X.shape[0] != X.shape[1] or not _is_identity(X):
            raise IncompatibleConstraintError(
                f"{spec.kind} constraint requires an identity design (X = I_n), got a {X.shape[0]}x{X.shape[1]} design"
            )
        if spec.sites is None and dataset.sites is not None:
            spec = replace(spec, sites=tuple(dataset.sites))
    return spec


def _least_squares(X, y):
    """OLS coefficients; raises SingularDesignError for rank-deficient X."""
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError(f"design of shape {X.shape} is rank deficient")
    return np.linalg.lstsq(X, y, rcond=None)[0]


def _initial_tau(r, cfg):
    mad = float(np.median(np.abs(r - np.median(r))))
    scale = MAD_SCALE * mad
    if not scale > 0:
        scale = float(np.std(r))
    if not scale > 0:
        return float(cfg.tau_max)
    return project_box(1.0 / scale, cfg.tau_min, cfg.tau_max)


def initialize(dataset, spec, cfg):
    """Starting point; returns ``(Theta, warnings)``.

    ``"ols"`` starts from OLS, projected onto the ball for ``l1_ball``.  For
    shape constraints (identity design) it starts from the projection of a
    5-point running median of y.  tau starts at 1 / (1.4826 MAD) of the starting residuals.
    """
    X, y = dataset.X, dataset.y
    warnings = []
    if isinstance(cfg.init, Theta):
        beta = np.array(cfg.init.beta, dtype=float)
        if beta.size != X.shape[1]:
            raise InvalidInputError(f"initial beta has length {beta.size}, expected {X.shape[1]}")
        if spec.is_indicator:
            beta = prox(spec, beta, 1.0)
        return Theta(beta, project_box(cfg.init.tau, cfg.tau_min, cfg.tau_max)), warnings
    if cfg.init == "ols":
        if spec.is_shape:
            # OLS on an identity design reproduces y; start from the
            # constrained fit to a running median instead
            beta = prox(spec, median_filter(y, size=MEDIAN_WINDOW, mode="mirror"), 1.0)
        else:
            try:
                beta = _least_squares(X, y)
            except SingularDesignError:
                warnings.append("rank-deficient design: OLS initialization replaced by zero")
                beta = np.zeros(X.shape[1])
            if spec.kind == "l1_ball":
                beta = prox(spec, beta, 1.0)
    else:
        beta = np.zeros(X.shape[1])
    r = y - X @ beta
    return Theta(beta, _initial_tau(r, cfg)), warnings


def fit(dataset, spec=None, cfg=None, callback=None):
    """Minimize ``h(beta, tau)`` plus the structural term over beta and tau in [tau_min, tau_max].

    Stops when the relative objective change
    ``|L_k - L_{k-1}| / (1 + |L_{k-1}|)`` and the length of the last step in
    each block are all below ``cfg.tol``, or after ``cfg.max_outer_iter``
    outer iterations.  ``callback(k, objective, theta)`` is invoked after each
    outer iteration.
    """
    if spec is None:
        spec = ConstraintSpec()
    if cfg is None:
        cfg = FitConfig()
    if not isinstance(dataset, Dataset):
        raise InvalidInputError("fit expects a Dataset")
    spec = _check_compatible(dataset, spec)
    theta, warnings = initialize(dataset, spec, cfg)
    prob = _Problem(dataset.X, dataset.y, spec, cfg)
    beta, tau = np.array(theta.beta), theta.tau
    trace = [prob.objective(beta, tau)]
    converged = False
    k = 0
    for k in range(1, int(cfg.max_outer_iter) + 1):
        beta, move_beta = prob.beta_block(beta, tau, k)
        tau, move_tau = prob.tau_block(beta, tau, k)
        obj = prob.objective(beta, tau)
        if not np.isfinite(obj):
            raise NumericalFailureError("objective is not finite", k)
        prev = trace[-1]
        trace.append(obj)
        if callback is not None:
            callback(k, obj, Theta(beta, tau))
        rel = abs(obj - prev) / (1.0 + abs(prev)) if np.isfinite(prev) else np.inf
        if rel < cfg.tol and move_beta < cfg.tol and move_tau < cfg.tol:
            converged = True
            break
    if spec.is_indicator and not is_feasible(spec, beta):
        beta = prox(spec, beta, 1.0)
    if prob.halvings:
        warnings.append(f"step size halved {prob.halvings} times to keep descent")
    return _result(prob, beta, tau, trace, converged, k, warnings)


def _result(prob, beta, tau, trace, converged, k, warnings):
    fitted = prob.design.mul(beta)
    r = prob.y - fitted
    w = np.exp(-0.5 * (tau * r) ** 2)
    return FitResult(
        theta_hat=Theta(beta, tau),
        weights=w,
        objective_trace=np.array(trace),
        converged=converged,
        outer_iterations=k,
        outlier_flags=flag_outliers(w, prob.cfg.outlier_weight_threshold),
        pseudo_response=w * prob.y + (1.0 - w) * fitted,
        fitted=fitted,
        step_halvings=prob.halvings,
        warnings=tuple(warnings),
    )


def _problem_for(X, y, spec, cfg):
    X = core.as_matrix(X)
    y = core.as_vector(y, "y")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError("X.shape[0] vs len(y)", X.shape[0], y.shape[0])
    return _Problem(X, y, spec, cfg)


def update_beta(X, y, beta, tau, spec=None, cfg=None):
    """Run the beta block: ``n_beta`` proximal-gradient steps at fixed tau."""
    spec = spec or ConstraintSpec()
    cfg = cfg or FitConfig()
    core._check_tau(tau)
    prob = _problem_for(X, y, spec, cfg)
    return prob.beta_block(core.as_vector(beta, "beta").copy(), float(tau))[0]


def update_tau(r, tau, cfg=None):
    """Run the tau block: ``n_tau`` projected-gradient steps at fixed residuals."""
    cfg = cfg or FitConfig()
    r = core.as_vector(r, "r")
    core._check_tau(tau)
    prob = _Problem(np.ones((r.size, 1)), r, ConstraintSpec(), cfg, sigma_x=1.0)
    return prob.tau_block(np.zeros(1), float(tau))[0]


def stationarity_residuals(dataset, spec, theta, cfg=None):
    """Lengths of one beta step and one tau step taken from ``theta``."""
    cfg = cfg or FitConfig()
    spec = _check_compatible(dataset, spec)
    prob = _Problem(dataset.X, dataset.y, spec, cfg)
    beta = np.array(theta.beta, dtype=float)
    tau = theta.tau
    beta_new = prob.beta_step(beta, tau, prob.beta_step_size(tau))
    r = prob.residuals(beta)
    tau_new = prob.tau_step(r, tau, prob.tau_step_size(r))
    return float(np.linalg.norm(beta_new - beta)), float(abs(tau_new - tau))


def check_stationarity(dataset, spec, theta, eps, cfg=None):
    """True iff a single step on each block moves it by less than ``eps``."""
    db, dt = stationarity_residuals(dataset, spec, theta, cfg)
    return db < eps and dt < eps
