"""Monte Carlo comparisons of L2E and least-squares fits on synthetic data."""
import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import convex_mle, isotonic_mle
from .data import SimulationSpec, simulate
from .prox import ConstraintSpec
from .solver import FitConfig, fit

SHAPE_SETUPS = {
    "cubic": "isotonic",
    "quartic": "convex",
}
ESTIMATORS = ("l2e", "mle")


def trial_seed(base_seed, trial):
    """Seed for one trial, derived from ``(base_seed, trial)`` through a SeedSequence.

    The seed does not depend on the outlier level, so the clean noise is shared
    across levels within a trial.
    """
    return int(np.random.SeedSequence([int(base_seed), int(trial)]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TrialResult:
    estimator: str
    outlier_level: int
    trial: int
    mse: float


def run_trial(generator, n, level, trial, base_seed, magnitude=10.0, cfg=None):
    """Fit both estimators to one simulated shape-constrained dataset.

    Returns a pair of :class:`TrialResult` (L2E first), each with the mean
    squared error of the fitted values against the true function at the sites.
    """
    kind = SHAPE_SETUPS[generator]
    spec = SimulationSpec(
        generator, n=n, n_outliers=level, outlier_magnitude=magnitude, seed=trial_seed(base_seed, trial)
    )
    ds, truth = simulate(spec)
    res = fit(ds, ConstraintSpec(kind, sites=tuple(ds.sites)), cfg or FitConfig())
    mle = isotonic_mle(ds.y) if kind == "isotonic" else convex_mle(ds.y, ds.sites)
    f = truth.f_values
    return (
        TrialResult("l2e", level, trial, float(np.mean((res.fitted - f) ** 2))),
        TrialResult("mle", level, trial, float(np.mean((mle - f) ** 2))),
    )


def run_benchmark(generator, n, levels, trials, base_seed, magnitude=10.0, cfg=None, workers=1):
    """All (level, trial) combinations; rows sorted by (estimator, level, trial)."""
    if generator not in SHAPE_SETUPS:
        raise ValueError(f"benchmark generator must be one of {tuple(SHAPE_SETUPS)}, got {generator!r}")
    jobs = [(lvl, t) for lvl in levels for t in range(trials)]

    def one(job):
        return run_trial(generator, n, job[0], job[1], base_seed, magnitude, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, jobs))
    else:
        pairs = [one(j) for j in jobs]
    rows = [r for pair in pairs for r in pair]
    rows.sort(key=lambda r: (r.estimator, r.outlier_level, r.trial))
    return rows


def benchmark_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "outlier_level", "trial", "mse"])
    for r in rows:
        w.writerow([r.estimator, r.outlier_level, r.trial, format(r.mse, ".17g")])
    return buf.getvalue()


def median_mse(rows):
    """``{(estimator, level): median mse}``."""
    groups = {}
    for r in rows:
        groups.setdefault((r.estimator, r.outlier_level), []).append(r.mse)
    return {k: float(np.median(v)) for k, v in groups.items()}
