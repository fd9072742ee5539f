"""Proximal maps and projections for the structural term of the objective.

Supported terms:

* ``none``: no term, prox is the identity
* ``l1_penalty``: lam * ||beta||_1, prox is soft-thresholding
* ``l1_ball``: indicator of {||beta||_1 <= radius}
* ``isotonic``: indicator of the monotone cone beta_1 <= ... <= beta_n
* ``convex``: indicator of the discrete convex cone {D beta >= 0} on given sites
"""
from dataclasses import dataclass

import numpy as np

from .core import as_vector
from .errors import InvalidBoundsError, InvalidInputError, UnsupportedConstraintError

KINDS = ("none", "l1_penalty", "l1_ball", "isotonic", "convex")
SHAPE_KINDS = ("isotonic", "convex")
INDICATOR_KINDS = ("l1_ball", "isotonic", "convex")
FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class ConstraintSpec:
    """Tagged description of the structural term.

    ``lam`` is used by ``l1_penalty`` and ``radius`` by ``l1_ball``.  ``sites``
    (strictly increasing abscissae) only matter for ``convex``; when omitted
    the sites are taken as 0, 1, ..., n-1.
    """

    kind: str = "none"
    lam: float = 0.0
    radius: float = 0.0
    sites: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedConstraintError(f"unknown constraint kind {self.kind!r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InvalidInputError(f"lambda must be nonnegative, got {self.lam!r}")
        if not np.isfinite(self.radius) or self.radius < 0:
            raise InvalidInputError(f"radius must be nonnegative, got {self.radius!r}")
        if self.sites is not None:
            sites = tuple(float(s) for s in self.sites)
            check_sites(np.asarray(sites))
            object.__setattr__(self, "sites", sites)

    @classmethod
    def parse(cls, text, sites=None):
        """Parse the CLI form: ``none``, ``l1:LAMBDA``, ``l1ball:RADIUS``, ``isotonic``, ``convex``."""
        name, _, arg = text.strip().partition(":")
        name = name.lower()
        try:
            if name == "none" and not arg:
                return cls("none")
            if name == "l1":
                return cls("l1_penalty", lam=float(arg))
            if name == "l1ball":
                return cls("l1_ball", radius=float(arg))
            if name == "isotonic" and not arg:
                return cls("isotonic", sites=sites)
            if name == "convex" and not arg:
                return cls("convex", sites=sites)
        except ValueError as exc:
            raise InvalidInputError(f"bad constraint argument in {text!r}: {exc}") from None
        raise UnsupportedConstraintError(
            f"unknown constraint {text!r}; expected none, l1:LAMBDA, l1ball:RADIUS, isotonic or convex"
        )

    def label(self):
        if self.kind == "l1_penalty":
            return f"l1:{self.lam!r}"
        if self.kind == "l1_ball":
            return f"l1ball:{self.radius!r}"
        return self.kind

    @property
    def is_indicator(self):
        return self.kind in INDICATOR_KINDS

    @property
    def is_shape(self):
        return self.kind in SHAPE_KINDS

    def site_array(self, n):
        if self.sites is None:
            return np.arange(n, dtype=float)
        if len(self.sites) != n:
            raise InvalidInputError(f"constraint has {len(self.sites)} sites but vector has length {n}")
        return np.asarray(self.sites)


def check_sites(sites):
    if sites.ndim != 1 or not np.all(np.isfinite(sites)):
        raise InvalidInputError("sites must be a finite vector")
    if np.any(np.diff(sites) <= 0):
        raise InvalidInputError("sites must be strictly increasing")


def soft_threshold(v, threshold):
    v = as_vector(v, "v")
    if not np.isfinite(threshold) or threshold < 0:
        raise InvalidInputError(f"threshold must be nonnegative, got {threshold!r}")
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def project_l1_ball(v, radius):
    """Euclidean projection onto ``{u : ||u||_1 <= radius}`` (sort-based)."""
    v = as_vector(v, "v")
    if not np.isfinite(radius) or radius < 0:
        raise InvalidInputError(f"radius must be nonnegative, got {radius!r}")
    a = np.abs(v)
    if a.sum() <= radius:
        return v
    if radius == 0:
        return np.zeros_like(v)
    theta = l1_threshold(a, radius)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def l1_threshold(a, radius):
    """Threshold theta with ``sum(max(a - theta, 0)) == radius`` for ``a >= 0``."""
    mu = np.sort(a)[::-1]
    cssv = np.cumsum(mu) - radius
    ind = np.arange(1, a.size + 1)
    rho = np.nonzero(mu * ind > cssv)[0][-1]
    return cssv[rho] / (rho + 1.0)


def project_isotonic(v):
    """Least-squares projection onto the nondecreasing cone (pool adjacent violators)."""
    v = as_vector(v, "v")
    if v.size == 0:
        raise InvalidInputError("cannot project an empty vector")
    sums = []
    counts = []
    for x in v.tolist():
        s, c = x, 1
        # merge while the previous block mean exceeds the current one
        while sums and sums[-1] * c > s * counts[-1]:
            s += sums.pop()
            c += counts.pop()
        sums.append(s)
        counts.append(c)
    means = np.array(sums) / np.array(counts)
    return np.repeat(means, counts)


def second_difference(u, sites=None):
    """Apply the (n-2)-row second-difference operator D.

    For uniform sites row i is ``u[i] - 2 u[i+1] + u[i+2]``.  Nonuniform sites
    use twice the gap between the chord through the neighbours and the middle
    value, which reduces to the same thing on a uniform grid.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    if n < 3:
        return np.zeros(0)
    t = np.arange(n, dtype=float) if sites is None else np.asarray(sites, dtype=float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    chord = (h2 * u[:-2] + h1 * u[2:]) / (h1 + h2)
    return 2.0 * (chord - u[1:-1])


def project_convex_cone(v, sites=None, method="active_set", knots=None, max_sweeps=10_000, tol=1e-10):
    """Least-squares projection onto ``{u : D u >= 0}``.

    ``method="active_set"`` solves the problem exactly through a
    nonnegative least-squares fit on the hinge basis ``(t - t_j)_+``;
    ``method="dykstra"`` runs Dykstra's cyclic projections onto the n-2
    half-spaces.  For n < 3 the cone is the whole space and ``v`` is returned.
    """
    v = as_vector(v, "v")
    n = v.size
    t = np.arange(n, dtype=float) if sites is None else as_vector(sites, "sites")
    if t.size != n:
        raise InvalidInputError(f"got {t.size} sites for a vector of length {n}")
    check_sites(t)
    if n < 3:
        return v.copy()
    if method == "active_set":
        return convex_active_set(v, t, knots)[0]
    if method == "dykstra":
        return convex_dykstra(v, t, max_sweeps=max_sweeps, tol=tol)
    raise InvalidInputError(f"unknown convex projection method {method!r}")


def convex_dykstra(v, t, max_sweeps=10_000, tol=1e-10):
    n = v.size
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    # half-space i: a_i u[i] - u[i+1] + b_i u[i+2] >= 0
    a = h2 / (h1 + h2)
    b = h1 / (h1 + h2)
    norm2 = a * a + b * b + 1.0
    x = v.copy()
    inc = np.zeros((3, n - 2))
    # rows i, i+3, i+6, ... touch disjoint coordinates, so each group is
    # projected at once; the sweep order is i = 0, 3, 6, ..., 1, 4, ..., 2, 5, ...
    groups = [np.arange(k, n - 2, 3) for k in range(3)]
    scale = 1.0 + np.max(np.abs(v))
    for _ in range(max_sweeps):
        start = x.copy()
        for g in groups:
            y0 = x[g] + inc[0, g]
            y1 = x[g + 1] + inc[1, g]
            y2 = x[g + 2] + inc[2, g]
            lam = np.minimum(a[g] * y0 - y1 + b[g] * y2, 0.0) / norm2[g]
            x[g] = y0 - lam * a[g]
            x[g + 1] = y1 + lam
            x[g + 2] = y2 - lam * b[g]
            inc[0, g] = lam * a[g]
            inc[1, g] = -lam
            inc[2, g] = lam * b[g]
        if np.max(np.abs(x - start)) <= tol * scale:
            break
    return x


def _hinge_fit(v, ts, P):
    """Least-squares fit of v on [1, t, (t - t_j)_+ for j in P]; returns (coef_on_P, fitted)."""
    n = v.size
    A = np.empty((n, len(P) + 2))
    A[:, 0] = 1.0
    A[:, 1] = ts
    if P:
        A[:, 2:] = np.maximum(ts[:, None] - ts[P][None, :], 0.0)
    coef = np.linalg.lstsq(A, v, rcond=None)[0]
    return coef[2:], A @ coef


def convex_active_set(v, t, knots=None, max_iter=None):
    """Exact convex-cone projection by Lawson-Hanson NNLS on the hinge basis.

    ``knots`` optionally warm-starts the passive set (indices of interior
    sites where the slope may increase).  Returns ``(u, knots)`` so callers
    can reuse the final set.
    """
    n = v.size
    if n < 3:
        return v.copy(), []
    ts = (t - t[0]) / (t[-1] - t[0])
    interior = np.arange(1, n - 1)
    scale = np.sum(np.abs(v)) + 1.0
    wtol = 1e-12 * n * scale
    if max_iter is None:
        max_iter = 3 * n + 30

    def dual(fitted):
        # w_j = sum_{i>j} (t_i - t_j) (v_i - u_i) for each interior j
        res = v - fitted
        s0 = np.cumsum(res[::-1])[::-1]
        s1 = np.cumsum((ts * res)[::-1])[::-1]
        return s1[interior + 1] - ts[interior] * s0[interior + 1]

    P = sorted(set(int(k) for k in (knots or []) if 1 <= k <= n - 2))
    x = {}
    while P:
        coef, fitted = _hinge_fit(v, ts, P)
        if np.all(coef > 0):
            x = dict(zip(P, coef))
            break
        P = [j for j, c in zip(P, coef) if c > 0]
    if not P:
        coef, fitted = _hinge_fit(v, ts, P)

    for _ in range(max_iter):
        w = dual(fitted)
        if P:
            w[np.array(P) - 1] = -np.inf
        j = int(np.argmax(w)) + 1
        if w[j - 1] <= wtol:
            break
        P = sorted(P + [j])
        x[j] = 0.0
        while True:
            coef, fitted = _hinge_fit(v, ts, P)
            z = dict(zip(P, coef))
            bad = [k for k in P if z[k] <= 0]
            if not bad:
                x = z
                break
            # step back to the boundary of the feasible region and drop the
            # coefficient that hit zero
            alpha, k_out = min((x[k] / (x[k] - z[k]), k) for k in bad)
            x = {k: x[k] + alpha * (z[k] - x[k]) for k in P}
            P = [k for k in P if k != k_out and x[k] > 0]
            x = {k: x[k] for k in P}
        if j not in P:
            # the entering knot was rejected: dual residual is at rounding level
            coef, fitted = _hinge_fit(v, ts, P)
            break
    return fitted, P


def project_box(tau, tau_min, tau_max):
    if not (tau_min < tau_max):
        raise InvalidBoundsError(f"need tau_min < tau_max, got [{tau_min!r}, {tau_max!r}]")
    return float(min(max(tau, tau_min), tau_max))


def prox(spec, v, step=1.0, knots=None):
    """Proximal map at ``v`` of ``step`` times the term described by ``spec``."""
    v = as_vector(v, "v")
    if not np.isfinite(step) or step <= 0:
        raise InvalidInputError(f"step must be positive, got {step!r}")
    kind = spec.kind
    if kind == "none":
        return v.copy()
    if kind == "l1_penalty":
        return soft_threshold(v, step * spec.lam)
    if kind == "l1_ball":
        return project_l1_ball(v, spec.radius).copy()
    if kind == "isotonic":
        return project_isotonic(v)
    if kind == "convex":
        return project_convex_cone(v, spec.site_array(v.size), knots=knots)
    raise UnsupportedConstraintError(f"unknown constraint kind {kind!r}")


def is_feasible(spec, beta, tol=FEASIBILITY_TOL):
    beta = np.asarray(beta, dtype=float)
    if spec.kind == "l1_ball":
        return bool(np.sum(np.abs(beta)) <= spec.radius + tol * max(1.0, spec.radius))
    if spec.kind == "isotonic":
        return bool(np.all(np.diff(beta) >= -tol))
    if spec.kind == "convex":
        return bool(np.all(second_difference(beta, spec.site_array(beta.size)) >= -tol))
    return True


def penalty(spec, beta):
    """Value of the structural term: +inf outside an indicator's set, lam * ||beta||_1 for the penalty."""
    if spec.kind == "l1_penalty":
        return float(spec.lam * np.sum(np.abs(beta)))
    if spec.is_indicator and not is_feasible(spec, beta):
        return float("inf")
    return 0.0
