"""L2E loss for Gaussian linear regression and its derivatives.

The averaged L2E loss for residuals ``r`` and precision ``tau`` is::

    h = tau / (2 sqrt(pi)) - (tau / n) sqrt(2 / pi) * sum_i exp(-tau^2 r_i^2 / 2)

Everything here is a pure function of numpy arrays.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidBoundsError,
    InvalidInputError,
    InvalidPrecisionError,
)

SQRT_PI = np.sqrt(np.pi)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
#: constant term of h per unit tau
LOSS_OFFSET = 1.0 / (2.0 * SQRT_PI)

LIPSCHITZ_TAU_FLOOR = 1e-8
LIPSCHITZ_TAU_SAFETY = 2.0


@dataclass(frozen=True)
class Theta:
    """Parameter pair: coefficients ``beta`` and noise precision ``tau``."""

    beta: np.ndarray
    tau: float

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(beta)):
            raise InvalidInputError("beta has non-finite entries")
        _check_tau(self.tau)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "tau", float(self.tau))


@dataclass(frozen=True)
class LipschitzInfo:
    sigma_x: float
    l_beta: float
    l_tau: float


def _check_tau(tau):
    if not np.isscalar(tau) or not np.isfinite(tau) or tau <= 0:
        raise InvalidPrecisionError(f"tau must be positive and finite, got {tau!r}")


def as_vector(a, name):
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return v


def as_matrix(a, name="X"):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {m.shape}")
    if m.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def residuals(X, y, beta):
    """Return ``y - X @ beta``."""
    X = as_matrix(X)
    y = as_vector(y, "y")
    beta = as_vector(beta, "beta")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError("X.shape[0] vs len(y)", X.shape[0], y.shape[0])
    if X.shape[1] != beta.shape[0]:
        raise DimensionMismatchError("X.shape[1] vs len(beta)", X.shape[1], beta.shape[0])
    return y - X @ beta


def weights(r, tau):
    """Robustness weights ``exp(-tau^2 r^2 / 2)``, the diagonal of W."""
    _check_tau(tau)
    r = as_vector(r, "r")
    return np.exp(-0.5 * (tau * r) ** 2)


def l2e_loss(r, tau):
    """Averaged L2E loss h for residual vector ``r`` at precision ``tau``."""
    _check_tau(tau)
    r = as_vector(r, "r")
    if r.size == 0:
        raise InvalidInputError("residual vector is empty")
    return _loss(r, tau)


def _loss(r, tau):
    return tau * LOSS_OFFSET - tau * SQRT_2_OVER_PI * np.mean(np.exp(-0.5 * (tau * r) ** 2))


def grad_beta(X, r, w, tau):
    """Gradient of h with respect to beta.

    Equals ``-(tau^3 / n) sqrt(2/pi) X^T W r``: the exact derivative of
    :func:`l2e_loss` composed with :func:`residuals`.
    """
    _check_tau(tau)
    X = as_matrix(X)
    r = as_vector(r, "r")
    w = as_vector(w, "w")
    if X.shape[0] != r.shape[0]:
        raise DimensionMismatchError("X.shape[0] vs len(r)", X.shape[0], r.shape[0])
    if w.shape != r.shape:
        raise DimensionMismatchError("len(w) vs len(r)", r.shape[0], w.shape[0])
    return _grad_beta(X, r, w, tau)


def _grad_beta(X, r, w, tau):
    return -(tau**3 / r.shape[0]) * SQRT_2_OVER_PI * (X.T @ (w * r))


def grad_tau(r, w, tau):
    """Partial derivative of h with respect to tau."""
    _check_tau(tau)
    r = as_vector(r, "r")
    w = as_vector(w, "w")
    if w.shape != r.shape:
        raise DimensionMismatchError("len(w) vs len(r)", r.shape[0], w.shape[0])
    return _grad_tau(r, w, tau)


def _grad_tau(r, w, tau):
    return LOSS_OFFSET - SQRT_2_OVER_PI * np.mean(w * (1.0 - (tau * r) ** 2))


def hess_tau(r, tau):
    """Second derivative of h in tau: ``sqrt(2/pi)/n * sum w r^2 tau (3 - tau^2 r^2)``.

    Accepts an array of tau values; the result broadcasts over them.
    """
    r = np.asarray(r, dtype=float)
    tau = np.asarray(tau, dtype=float)
    s2 = (tau[..., None] * r) ** 2
    terms = np.exp(-0.5 * s2) * r**2 * tau[..., None] * (3.0 - s2)
    return SQRT_2_OVER_PI * terms.mean(axis=-1)


def spectral_norm(X, tol=1e-10, max_iter=10_000, seed=0):
    """Largest singular value of ``X`` by power iteration on ``X^T X``.

    Stops once the eigen-residual ``||X^T X v - lam v||`` drops below
    ``tol * lam``.  The start vector comes from a fixed seed so repeated calls
    agree bitwise.
    """
    X = as_matrix(X)
    v = np.random.default_rng(seed).standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = X.T @ (X @ v)
        lam = float(v @ u)
        if lam <= 0.0:
            # v lies in the null space; X is zero or v was unlucky
            if not np.any(X):
                return 0.0
            v = np.ones(X.shape[1]) / np.sqrt(X.shape[1])
            continue
        if np.linalg.norm(u - lam * v) <= tol * lam:
            break
        v = u / np.linalg.norm(u)
    return float(np.sqrt(lam))


def r_star(tau):
    """Point at which the Lipschitz bound for the beta-gradient is evaluated."""
    return -(np.sqrt(1.0 + 4.0 * tau**2) - 1.0) / (2.0 * tau**2)


def g_curvature(r, tau):
    """Curvature factor ``(1 - tau^2 r) exp(-tau^2 r^2 / 2)`` of the beta Lipschitz bound."""
    return (1.0 - tau**2 * r) * np.exp(-0.5 * tau**2 * r**2)


def lipschitz_beta(sigma_x, tau, n):
    """Lipschitz constant of the beta-gradient.

    ``(tau^3/n) sqrt(2/pi) sigma_x^2`` times :func:`g_curvature` at :func:`r_star`.
    """
    _check_tau(tau)
    if not np.isfinite(sigma_x) or sigma_x < 0:
        raise InvalidInputError(f"sigma_x must be nonnegative, got {sigma_x!r}")
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n!r}")
    g = g_curvature(r_star(tau), tau)
    return float(abs(tau**3 / n * SQRT_2_OVER_PI * g * sigma_x**2))


def tau_grid(tau_min, tau_max, size):
    return np.geomspace(tau_min, tau_max, size)


def lipschitz_tau(r, tau_min, tau_max, grid_size=128):
    """Upper bound on ``|d^2 h / d tau^2|`` over ``[tau_min, tau_max]``.

    The analytic second derivative is evaluated on a geometric grid and the
    maximum is doubled; the result never falls below ``1e-8``.
    """
    r = as_vector(r, "r")
    if r.size == 0:
        raise InvalidInputError("residual vector is empty")
    _check_bounds(tau_min, tau_max)
    return _lipschitz_tau(r, tau_grid(tau_min, tau_max, grid_size))


def _lipschitz_tau(r, grid):
    peak = np.max(np.abs(hess_tau(r, grid)))
    return float(max(LIPSCHITZ_TAU_SAFETY * peak, LIPSCHITZ_TAU_FLOOR))


def _check_bounds(lo, hi):
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo <= 0 or lo >= hi:
        raise InvalidBoundsError(f"need 0 < tau_min < tau_max, got [{lo!r}, {hi!r}]")


def lipschitz_info(X, r, tau, tau_min, tau_max):
    sigma = spectral_norm(X)
    return LipschitzInfo(
        sigma_x=sigma,
        l_beta=lipschitz_beta(sigma, tau, np.shape(X)[0]),
        l_tau=lipschitz_tau(r, tau_min, tau_max),
    )
