import math

import numpy as np
import pytest

from l2ereg import core
from l2ereg.core import Theta
from l2ereg.data import Dataset, SimulationSpec, identity_dataset, simulate
from l2ereg.errors import (
    DimensionMismatchError,
    IncompatibleConstraintError,
    InvalidBoundsError,
    InvalidInputError,
    NumericalFailureError,
)
from l2ereg.prox import ConstraintSpec, project_isotonic, project_l1_ball
from l2ereg.solver import (
    DEFAULT_OUTLIER_THRESHOLD,
    FitConfig,
    check_stationarity,
    fit,
    flag_outliers,
    objective,
    pseudo_observations,
    stationarity_residuals,
    update_beta,
    update_tau,
)


def _linear(n=200, p=4, n_out=0, seed=0):
    return simulate(SimulationSpec("linear", n=n, p=p, n_outliers=n_out, seed=seed))


def test_default_threshold_is_three_sigma_rule():
    assert DEFAULT_OUTLIER_THRESHOLD == pytest.approx(math.exp(-0.5 * 3**2))


def test_pseudo_observations():
    np.testing.assert_allclose(pseudo_observations([1.0, 2.0], [0.0, 0.0], [1.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(pseudo_observations([4.0], [2.0], [0.25]), [2.5])
    with pytest.raises(InvalidInputError):
        pseudo_observations([1.0, 2.0], [1.0], [1.0, 1.0])


def test_unit_relative_step_is_pseudo_observation_update():
    rng = np.random.default_rng(0)
    y = np.cumsum(rng.standard_normal(30))
    beta = project_isotonic(y + rng.standard_normal(30))
    tau = 0.8
    cfg = FitConfig(n_beta=1, step_beta=1.0)
    w = core.weights(y - beta, tau)
    z = pseudo_observations(y, beta, w)
    got = update_beta(np.eye(30), y, beta, tau, ConstraintSpec("isotonic"), cfg)
    np.testing.assert_allclose(got, project_isotonic(z), atol=1e-12)
    got = update_beta(np.eye(30), y, beta, tau, ConstraintSpec(), cfg)
    np.testing.assert_allclose(got, z, atol=1e-12)


def test_update_beta_descends_for_every_constraint():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 5))
    y = X @ rng.standard_normal(5) + rng.standard_normal(40)
    beta0 = np.zeros(5)
    for spec in (ConstraintSpec(), ConstraintSpec("l1_penalty", lam=0.1), ConstraintSpec("l1_ball", radius=1.0)):
        b = update_beta(X, y, beta0, 1.0, spec)
        before = objective(X, y, Theta(beta0, 1.0), spec)
        after = objective(X, y, Theta(b, 1.0), spec)
        assert after <= before


def test_update_beta_l1_ball_stays_feasible():
    X = np.random.default_rng(2).standard_normal((30, 3))
    y = X @ np.array([5.0, -5.0, 5.0])
    b = update_beta(X, y, np.zeros(3), 0.5, ConstraintSpec("l1_ball", radius=1.0))
    assert np.sum(np.abs(b)) <= 1.0 + 1e-12
    np.testing.assert_allclose(project_l1_ball(b, 1.0), b)


def test_update_beta_dimension_errors():
    with pytest.raises(DimensionMismatchError):
        update_beta(np.eye(3), np.ones(4), np.zeros(3), 1.0)
    with pytest.raises(InvalidInputError):
        update_beta(np.eye(3), np.ones(3), np.zeros(3), -1.0)


def test_update_tau_zero_residuals_goes_to_upper_bound():
    # the loss is strictly decreasing in tau when every residual is zero
    cfg = FitConfig(n_tau=200, tau_max=5.0)
    assert update_tau(np.zeros(10), 1.0, cfg) == pytest.approx(5.0)


def test_update_tau_descends_and_respects_bounds():
    rng = np.random.default_rng(3)
    r = rng.standard_normal(500) / 2.0
    cfg = FitConfig(n_tau=50)
    tau = update_tau(r, 0.5, cfg)
    assert core.l2e_loss(r, tau) < core.l2e_loss(r, 0.5)
    assert cfg.tau_min <= tau <= cfg.tau_max
    # the minimizer is near the true precision 2 for Gaussian residuals
    assert abs(update_tau(r, 0.5, FitConfig(n_tau=2000)) - 2.0) < 0.3


def test_fit_clean_linear_matches_ols():
    ds, truth = _linear(n=300, p=4, seed=4)
    res = fit(ds)
    ols = np.linalg.lstsq(ds.X, ds.y, rcond=None)[0]
    assert res.converged
    np.testing.assert_allclose(res.beta, ols, atol=0.05)
    assert abs(res.tau - truth.tau_star) < 0.2


def test_fit_ignores_gross_outliers():
    ds, truth = _linear(n=300, p=4, n_out=30, seed=5)
    res = fit(ds)
    np.testing.assert_allclose(res.beta, truth.beta_star, atol=0.2)
    assert set(truth.outlier_indices) <= set(np.nonzero(res.outlier_flags)[0])


@pytest.mark.parametrize(
    "spec",
    [
        ConstraintSpec(),
        ConstraintSpec("l1_penalty", lam=0.05),
        ConstraintSpec("l1_ball", radius=2.0),
    ],
    ids=lambda s: s.kind,
)
def test_fit_linear_trace_monotone_and_stationary(spec):
    ds, _ = _linear(n=150, p=5, n_out=10, seed=6)
    cfg = FitConfig(tol=1e-8)
    res = fit(ds, spec, cfg)
    assert res.converged
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
    assert len(res.objective_trace) == res.outer_iterations + 1
    assert check_stationarity(ds, spec, res.theta_hat, 10 * cfg.tol, cfg)


@pytest.mark.parametrize("generator,kind", [("cubic", "isotonic"), ("quartic", "convex")])
def test_fit_shape_constrained(generator, kind):
    ds, truth = simulate(SimulationSpec(generator, n=200, n_outliers=20, seed=7))
    spec = ConstraintSpec(kind)
    # precision climbs slowly on identity designs; allow more outer iterations
    res = fit(ds, spec, FitConfig(max_outer_iter=3000))
    assert res.converged
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
    if kind == "isotonic":
        assert np.all(np.diff(res.beta) >= -1e-10)
    np.testing.assert_array_equal(res.fitted, res.beta)
    assert np.mean((res.fitted - truth.f_values) ** 2) < 5e-3


def test_shape_constraint_requires_identity_design():
    ds, _ = _linear(n=20, p=2)
    with pytest.raises(IncompatibleConstraintError):
        fit(ds, ConstraintSpec("isotonic"))


def test_fit_result_fields_consistent():
    ds, _ = _linear(n=100, p=3, n_out=5, seed=8)
    res = fit(ds)
    r = ds.y - ds.X @ res.beta
    np.testing.assert_allclose(res.weights, core.weights(r, res.tau))
    np.testing.assert_allclose(res.fitted, ds.X @ res.beta)
    np.testing.assert_allclose(res.pseudo_response, res.weights * ds.y + (1 - res.weights) * res.fitted)
    np.testing.assert_array_equal(res.outlier_flags, res.weights < DEFAULT_OUTLIER_THRESHOLD)
    assert res.objective_trace[-1] == pytest.approx(objective(ds.X, ds.y, res.theta_hat, ConstraintSpec()))


def test_fit_is_deterministic():
    ds, _ = _linear(n=100, p=3, n_out=5, seed=9)
    a, b = fit(ds), fit(ds)
    np.testing.assert_array_equal(a.beta, b.beta)
    np.testing.assert_array_equal(a.objective_trace, b.objective_trace)


def test_callback_and_max_iter():
    ds, _ = _linear(n=100, p=3, seed=10)
    seen = []
    res = fit(ds, cfg=FitConfig(max_outer_iter=3, tol=1e-15), callback=lambda k, obj, th: seen.append(k))
    assert seen == [1, 2, 3]
    assert not res.converged and res.outer_iterations == 3


def test_zero_init_and_warm_start():
    ds, _ = _linear(n=100, p=3, seed=11)
    a = fit(ds, cfg=FitConfig(init="zero"))
    b = fit(ds, cfg=FitConfig(init=Theta(a.beta, a.tau)))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-6)
    assert b.outer_iterations <= 2


def test_rank_deficient_design_warns():
    X = np.column_stack([np.ones(20), np.ones(20)])
    ds = Dataset(X, np.linspace(0, 1, 20))
    res = fit(ds, cfg=FitConfig(max_outer_iter=50))
    assert any("rank-deficient" in w for w in res.warnings)
    assert np.all(np.isfinite(res.beta))


def test_nonfinite_update_raises_numerical_failure():
    ds, _ = _linear(n=30, p=2, seed=12)
    with pytest.raises(NumericalFailureError) as info:
        fit(ds, cfg=FitConfig(step_beta=1e308))
    assert info.value.iteration == 1


def test_fitconfig_validation():
    with pytest.raises(InvalidBoundsError):
        FitConfig(tau_min=2.0, tau_max=1.0)
    with pytest.raises(InvalidInputError):
        FitConfig(n_beta=0)
    with pytest.raises(InvalidInputError):
        FitConfig(step_beta=-1.0)
    with pytest.raises(InvalidInputError):
        FitConfig(init="magic")
    with pytest.raises(InvalidInputError):
        FitConfig(outlier_weight_threshold=1.5)
    assert FitConfig().as_dict()["step_beta"] == "auto"


def test_flag_outliers():
    np.testing.assert_array_equal(flag_outliers([0.5, 0.001, 0.02]), [False, True, False])
    np.testing.assert_array_equal(flag_outliers([0.5, 0.4], 0.45), [False, True])
    with pytest.raises(InvalidInputError):
        flag_outliers([0.5], 0.0)


def test_stationarity_residuals_far_from_optimum():
    ds = identity_dataset(np.linspace(0, 1, 10))
    db, dt = stationarity_residuals(ds, ConstraintSpec(), Theta(np.zeros(10), 1.0))
    assert db > 1e-3
    assert not check_stationarity(ds, ConstraintSpec(), Theta(np.zeros(10), 1.0), 1e-6)
