"""Datasets: CSV ingestion, standardization and synthetic generators.

All randomness goes through numpy's PCG64 bit generator
(``numpy.random.Generator(numpy.random.PCG64(seed))``), so a seed fixes a
simulated dataset on every platform numpy supports.
"""
import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConstantColumnError,
    DataError,
    InvalidInputError,
    MissingColumnError,
    ParseError,
)

GENERATORS = ("cubic", "quartic", "linear")
OUTLIER_SIDES = ("response", "design", "both")
#: default true coefficients for the linear generator, cycled to length p
DEFAULT_BETA_PATTERN = (3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0)
SHAPE_NOISE_SD = 0.1


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` and design ``X``.

    ``sites`` is set for identity-design data (shape-constrained problems),
    where ``X`` is the n x n identity and ``sites`` holds the abscissae.
    When ``standardized`` is true, ``x_mean``, ``x_scale`` and ``y_mean``
    record the transformation so coefficients can be mapped back.
    """

    X: np.ndarray
    y: np.ndarray
    column_names: tuple = None
    response_name: str = "y"
    sites: np.ndarray = None
    standardized: bool = False
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: float = None
    y_scale: float = 1.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise InvalidInputError(f"X must be two-dimensional, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError("dataset needs n >= 1 and p >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset has non-finite entries")
        has_records = self.x_mean is not None and self.x_scale is not None and self.y_mean is not None
        if self.standardized != has_records:
            raise InvalidInputError("back-transformation records must be present iff standardized")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.sites is not None:
            object.__setattr__(self, "sites", np.asarray(self.sites, dtype=float))
        if self.column_names is not None:
            object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def is_identity_design(self):
        return self.sites is not None

    def names(self):
        if self.column_names is not None:
            return list(self.column_names)
        if self.is_identity_design:
            return ["t"]
        return [f"x{j + 1}" for j in range(self.p)]


def identity_dataset(y, sites=None, response_name="y"):
    y = np.asarray(y, dtype=float)
    if sites is None:
        sites = np.arange(y.size, dtype=float)
    return Dataset(np.eye(y.size), y, column_names=("t",), response_name=response_name, sites=sites)


def to_identity_design(dataset):
    """Reinterpret a one-covariate dataset as sites for a shape-constrained fit.

    Rows are sorted by site; sites must be distinct.
    """
    if dataset.is_identity_design:
        return dataset
    if dataset.p != 1:
        raise InvalidInputError(
            f"shape constraints need a single site column, got {dataset.p} covariates"
        )
    t = dataset.X[:, 0]
    order = np.argsort(t, kind="stable")
    t = t[order]
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("site column must have distinct values")
    ds = identity_dataset(dataset.y[order], t, response_name=dataset.response_name)
    return replace(ds, column_names=dataset.column_names or ("t",))


def load_csv(path, response_column=-1, header=True):
    """Read a numeric CSV file into a :class:`Dataset`.

    ``response_column`` is a header name or a column index (negative indices
    count from the end).  Every other column becomes a covariate, in file
    order.
    """
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if header:
        if not rows:
            raise DataError(f"{path}: empty file")
        names, rows = [c.strip() for c in rows[0]], rows[1:]
        first_row = 2
    else:
        names = None
        first_row = 1
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0]) if names is None else len(names)
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {i + first_row} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(path, i + first_row, j + 1, cell) from None
            if not math.isfinite(x):
                raise ParseError(path, i + first_row, j + 1, cell)
            values[i, j] = x
    k = _column_index(response_column, names, width, path)
    if width < 2:
        raise DataError(f"{path}: need at least one covariate column besides the response")
    keep = [j for j in range(width) if j != k]
    col_names = None if names is None else tuple(names[j] for j in keep)
    response_name = names[k] if names is not None else f"col{k + 1}"
    return Dataset(values[:, keep], values[:, k], column_names=col_names, response_name=response_name)


def _column_index(column, names, width, path):
    if isinstance(column, str) and not _is_int(column):
        if names is None or column not in names:
            raise MissingColumnError(f"{path}: response column {column!r} not found")
        return names.index(column)
    k = int(column)
    if not -width <= k < width:
        raise MissingColumnError(f"{path}: response column index {k} out of range for {width} columns")
    return k % width


def _is_int(s):
    try:
        int(s)
    except ValueError:
        return False
    return True


def format_number(x):
    """17 significant digits; round-trips every double."""
    return format(float(x), ".17g")


def write_csv(dataset, path, header=True):
    """Write covariates then the response, one row per observation.

    Identity-design datasets are written as a site column and the response.
    """
    if dataset.is_identity_design:
        cols = dataset.sites[:, None]
    else:
        cols = dataset.X
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(dataset.names() + [dataset.response_name])
        for row, yi in zip(cols, dataset.y):
            w.writerow([format_number(v) for v in row] + [format_number(yi)])


def standardize(dataset, scale_y=False):
    """Center and scale each covariate to mean 0, SD 1 (ddof=1); center y.

    With ``scale_y`` the response is also divided by its SD, so coefficients
    come out as standardized (unit-free) coefficients.  Already-standardized
    datasets get composed records so that :func:`unstandardize` still
    recovers the original data.
    """
    X, y = dataset.X, dataset.y
    if dataset.n < 2:
        raise InvalidInputError("standardization needs at least two observations")
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    names = dataset.names()
    for j, s in enumerate(scale):
        if not s > 0 or np.allclose(X[:, j], X[0, j], rtol=0, atol=0):
            raise ConstantColumnError(names[j])
    ymean = float(y.mean())
    yscale = 1.0
    if scale_y:
        yscale = float(y.std(ddof=1))
        if not yscale > 0:
            raise ConstantColumnError(dataset.response_name)
    Xs = (X - mean) / scale
    ys = (y - ymean) / yscale
    if dataset.standardized:
        mean = dataset.x_mean + dataset.x_scale * mean
        scale = dataset.x_scale * scale
        ymean = dataset.y_mean + dataset.y_scale * ymean
        yscale = dataset.y_scale * yscale
    return replace(
        dataset, X=Xs, y=ys, standardized=True, x_mean=mean, x_scale=scale, y_mean=ymean, y_scale=yscale
    )


def unstandardize(dataset):
    if not dataset.standardized:
        return dataset
    X = dataset.X * dataset.x_scale + dataset.x_mean
    y = dataset.y * dataset.y_scale + dataset.y_mean
    return replace(dataset, X=X, y=y, standardized=False, x_mean=None, x_scale=None, y_mean=None, y_scale=1.0)


def coefficients_to_original(dataset, beta):
    """Map standardized-scale coefficients back; returns ``(intercept, slopes)``."""
    beta = np.asarray(beta, dtype=float)
    if not dataset.standardized:
        return 0.0, beta
    slopes = beta * dataset.y_scale / dataset.x_scale
    return float(dataset.y_mean - slopes @ dataset.x_mean), slopes


@dataclass(frozen=True)
class SimulationSpec:
    """Recipe for a synthetic dataset with gross-error contamination.

    ``generator`` is ``cubic`` (f(t) = t^3), ``quartic`` (f(t) = t^4), both on
    a uniform grid of n sites in [-1, 1] with identity design, or ``linear``
    (Gaussian design with ``p`` columns and coefficients ``beta_star``).
    Outliers shift the response by ``+-outlier_magnitude / tau_star`` and/or
    multiply design rows by ``outlier_magnitude``.
    """

    generator: str = "cubic"
    n: int = 1000
    n_outliers: int = 0
    outlier_magnitude: float = 10.0
    outlier_side: str = "response"
    seed: int = 0
    p: int = 8
    beta_star: tuple = None
    tau_star: float = None

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise InvalidInputError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        if self.outlier_side not in OUTLIER_SIDES:
            raise InvalidInputError(f"unknown outlier side {self.outlier_side!r}")
        if int(self.n) < 1:
            raise InvalidInputError("n must be positive")
        if not 0 <= int(self.n_outliers) < int(self.n):
            raise InvalidInputError(f"need 0 <= n_outliers < n, got {self.n_outliers} with n = {self.n}")
        if not (np.isfinite(self.outlier_magnitude) and self.outlier_magnitude > 0):
            raise InvalidInputError("outlier magnitude must be positive")
        if self.generator != "linear" and self.outlier_side != "response":
            raise InvalidInputError("design outliers require the linear generator (identity design has no covariates)")
        if self.tau_star is not None and not (np.isfinite(self.tau_star) and self.tau_star > 0):
            raise InvalidInputError("tau_star must be positive")
        if self.generator == "linear":
            if int(self.p) < 1:
                raise InvalidInputError("p must be positive")
            if self.beta_star is not None and len(self.beta_star) != self.p:
                raise InvalidInputError(f"beta_star has length {len(self.beta_star)}, expected p = {self.p}")
        if self.beta_star is not None:
            object.__setattr__(self, "beta_star", tuple(float(b) for b in self.beta_star))

    def resolved_tau(self):
        if self.tau_star is not None:
            return float(self.tau_star)
        return 1.0 / SHAPE_NOISE_SD if self.generator != "linear" else 1.0

    def resolved_beta(self):
        if self.beta_star is not None:
            return np.array(self.beta_star)
        return np.resize(np.array(DEFAULT_BETA_PATTERN), self.p)

    def as_dict(self):
        d = {
            "generator": self.generator,
            "n": int(self.n),
            "n_outliers": int(self.n_outliers),
            "outlier_magnitude": float(self.outlier_magnitude),
            "outlier_side": self.outlier_side,
            "seed": int(self.seed),
            "tau_star": self.resolved_tau(),
        }
        if self.generator == "linear":
            d["p"] = int(self.p)
            d["beta_star"] = self.resolved_beta().tolist()
        return d


@dataclass(frozen=True)
class GroundTruth:
    outlier_indices: np.ndarray
    f_values: np.ndarray = None
    beta_star: np.ndarray = None
    tau_star: float = None
    clean_X: np.ndarray = field(default=None, repr=False)

    def as_dict(self):
        d = {"outlier_indices": [int(i) for i in self.outlier_indices], "tau_star": self.tau_star}
        if self.f_values is not None:
            d["f_values"] = [float(v) for v in self.f_values]
        if self.beta_star is not None:
            d["beta_star"] = [float(v) for v in self.beta_star]
        return d


def shape_function(generator, t):
    if generator == "cubic":
        return t**3
    if generator == "quartic":
        return t**4
    raise InvalidInputError(f"{generator!r} is not a shape generator")


def simulate(spec):
    """Draw a dataset from ``spec``; returns ``(Dataset, GroundTruth)``.

    Draw order from the seeded generator: design (linear only), noise,
    outlier indices, outlier signs.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = int(spec.n)
    tau = spec.resolved_tau()
    if spec.generator == "linear":
        beta = spec.resolved_beta()
        X = rng.standard_normal((n, int(spec.p)))
        y = X @ beta + rng.standard_normal(n) / tau
    else:
        t = np.linspace(-1.0, 1.0, n)
        f = shape_function(spec.generator, t)
        y = f + rng.standard_normal(n) / tau
    idx = np.sort(rng.choice(n, size=int(spec.n_outliers), replace=False))
    signs = rng.choice(np.array([-1.0, 1.0]), size=idx.size)
    if spec.outlier_side in ("response", "both"):
        y[idx] += signs * spec.outlier_magnitude / tau
    if spec.generator == "linear":
        clean = X.copy()
        if spec.outlier_side in ("design", "both"):
            X[idx] *= spec.outlier_magnitude
        names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        ds = Dataset(X, y, column_names=names)
        return ds, GroundTruth(idx, beta_star=beta, tau_star=tau, clean_X=clean)
    return identity_dataset(y, t), GroundTruth(idx, f_values=f, tau_star=tau)
