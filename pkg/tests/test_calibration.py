import math
import time

import numpy as np
import pytest

from app.config import DIVERGENCE_SENTINEL
from app.errors import ConfigurationError, DomainError, NumericalDivergenceError, ParameterDomainError
from app.services import calibration, kernels
from app.services.calibration import FitSummary
from app.services.models import (
    PARAMS_BY_KIND,
    ModelKind,
    TvAr1GarchParams,
    TvAr1Params,
    build_tvar1,
    initial_conditions,
)
from app.services.simulation import simulate_tvar1, simulate_tvar1_garch
from app.services.statespace import run_filter


def test_aic_reference_values():
    assert calibration.aic(2687.96, 3) == pytest.approx(-5369.92)
    assert calibration.aic(2688.02, 4) == pytest.approx(-5368.04)
    assert calibration.aic(0.0, 0) == 0.0


def test_lr_test_values():
    assert calibration.lr_test(10.0, 10.0, 1) == (0.0, 1.0)
    statistic, pvalue = calibration.lr_test(2687.96, 2688.02, 1)
    assert statistic == pytest.approx(0.12, abs=1e-9)
    assert pvalue == pytest.approx(0.729, abs=1e-3)
    _, pvalue = calibration.lr_test(0.0, 6.635 / 2, 1)
    assert pvalue == pytest.approx(0.010, abs=1e-4)
    with pytest.raises(DomainError):
        calibration.lr_test(0.0, 1.0, 0)


def test_standard_errors_of_a_gaussian_objective():
    center, scale = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    stderr = calibration.standard_errors(lambda th: 0.5 * np.sum(((th - center) / scale) ** 2), center)
    np.testing.assert_allclose(stderr, scale, rtol=1e-5)


def test_standard_errors_of_a_separable_objective():
    stderr = calibration.standard_errors(
        lambda th: math.exp(th[0]) - th[0] + 0.125 * th[1] ** 2, np.array([0.0, 0.0])
    )
    np.testing.assert_allclose(stderr, [1.0, 2.0], rtol=1e-4)


def test_standard_errors_flag_flat_and_bounded_directions():
    stderr = calibration.standard_errors(lambda th: 3.0 * th[0] + 0.5 * th[1] ** 2, np.array([0.5, 0.0]))
    assert math.isnan(stderr[0])
    assert stderr[1] == pytest.approx(1.0, rel=1e-5)

    stderr = calibration.standard_errors(
        lambda th: 0.5 * np.sum(th ** 2), np.array([0.0, 0.0]), lower=[0.0, -1.0], upper=[1.0, 1.0]
    )
    assert math.isnan(stderr[0])
    assert stderr[1] == pytest.approx(1.0, rel=1e-5)


def test_standard_errors_flag_the_divergence_barrier():
    def objective(th):
        return 1e300 if th[0] > 0 else 0.5 * np.sum(th ** 2)

    stderr = calibration.standard_errors(objective, np.array([0.0, 0.0]))
    assert math.isnan(stderr[0])
    assert stderr[1] == pytest.approx(1.0, rel=1e-5)


def test_standard_errors_shrink_the_step_next_to_a_bound():
    center = np.array([5e-5, 0.3])
    scale = np.array([1e-3, 0.2])

    def objective(th):
        if th[0] < 0.0:
            return 1e300
        return 0.5 * np.sum(((th - center) / scale) ** 2)

    stderr = calibration.standard_errors(objective, center, lower=[0.0, -1.0], upper=[1.0, 1.0])
    np.testing.assert_allclose(stderr, scale, rtol=1e-5)


def test_garch_sized_omega_gets_a_standard_error():
    spec = calibration.default_spec("tvar1_garch")
    theta = np.array([0.1, 6e-5, 0.13495, 0.85318, 4e-4])
    scale = np.array([0.05, 2e-5, 0.03, 0.03, 2e-4])

    def objective(th):
        if np.any(th < np.asarray(spec.lower)) or np.any(th > np.asarray(spec.upper)):
            return 1e300
        return 0.5 * np.sum(((th - theta) / scale) ** 2)

    stderr = calibration.standard_errors(objective, theta, lower=spec.lower, upper=spec.upper)
    assert np.isfinite(stderr).all()
    np.testing.assert_allclose(stderr, scale, rtol=1e-4)


def test_garch_likelihood_stencil_for_omega_stays_inside_the_box():
    params = TvAr1GarchParams(beta1_0=0.1, omega=6e-5, a1=0.13495, b1=0.85318, sigma_w2=4e-4)
    returns, _, _ = simulate_tvar1_garch(params, 300, seed=4)
    spec = calibration.default_spec("tvar1_garch")
    theta = params.to_theta()
    visited = []

    def objective(th):
        visited.append(np.array(th))
        return -calibration.log_likelihood(spec, th, returns)

    calibration.standard_errors(objective, theta, lower=spec.lower, upper=spec.upper)
    omegas = np.array([point[1] for point in visited])
    assert 0.0 < omegas.min() < theta[1] < omegas.max()


def test_reconstruction_error():
    beta = np.linspace(-0.2, 0.4, 20)
    window = 5
    assert calibration.reconstruction_error(beta, beta[window - 1:], window) == 0.0
    assert calibration.reconstruction_error(beta, beta[window - 1:] + 0.05, window) == pytest.approx(0.05)

    rho = beta[window - 1:] - 0.02
    rho[3] = np.nan
    assert calibration.reconstruction_error(beta, rho, window) == pytest.approx(0.02)
    with pytest.raises(DomainError):
        calibration.reconstruction_error(beta[:3], beta, window)


def test_single_observation_likelihood_in_closed_form():
    y1, y2 = 0.03, -0.01
    theta = (0.0004, 0.00284, 0.2)
    spec = calibration.default_spec("tvar1", theta, obs_noise=1e-6)

    predicted_variance = (y1 ** 2 + 0.2 ** 2) + (y1 ** 2 * 0.0004 + 0.00284) + 1e-6
    residual = y2 - 0.2 * y1
    expected = -0.5 * math.log(predicted_variance) - 0.5 * residual ** 2 / predicted_variance
    assert calibration.log_likelihood(spec, theta, [y1, y2]) == pytest.approx(expected, rel=1e-12)


def test_likelihood_does_not_depend_on_batching(simulated_returns):
    params = TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2)
    model = build_tvar1(params)
    init = initial_conditions("tvar1", params, float(simulated_returns[0]))
    whole = run_filter(model, simulated_returns[1:], init)
    head = run_filter(model, simulated_returns[1:101], init)
    tail = run_filter(model, simulated_returns[101:], head.steps[-1].filtered)
    assert head.total_loglik + tail.total_loglik == pytest.approx(whole.total_loglik, rel=1e-12)

    spec = calibration.default_spec("tvar1", params.to_theta())
    assert calibration.log_likelihood(spec, params.to_theta(), simulated_returns) == pytest.approx(
        whole.total_loglik, rel=1e-10
    )


def test_likelihood_bounds_and_sentinel(simulated_returns):
    spec = calibration.default_spec("tvar1")
    with pytest.raises(ParameterDomainError):
        calibration.log_likelihood(spec, [2.0, 0.1, 0.0], simulated_returns)

    garch = calibration.default_spec("tvar1_garch")
    value = calibration.log_likelihood(garch, [0.0, 0.001, 0.5, 0.6, 0.01], simulated_returns)
    assert value == DIVERGENCE_SENTINEL


def test_default_spec_validation():
    spec = calibration.default_spec("tvar1-trend")
    assert spec.names == ("sigma_w2", "sigma_eps2", "beta1_0", "mu_beta1")
    assert spec.initial_theta == (0.01, 0.1, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        calibration.default_spec("tvar1", [0.01, 0.1])
    with pytest.raises(ConfigurationError):
        calibration.default_spec("tvar1", fixed={"omega": 0.1})
    with pytest.raises(ConfigurationError):
        calibration.default_spec("tvar1", [5.0, 0.1, 0.0])


def test_frozen_parameters_are_excluded_from_the_search():
    spec = calibration.default_spec("tvar1_trend", fixed={"mu_beta1": 0.0})
    assert spec.free_names == ("sigma_w2", "sigma_eps2", "beta1_0")
    np.testing.assert_array_equal(spec.expand([0.1, 0.2, 0.3]), [0.1, 0.2, 0.3, 0.0])


def test_trend_with_frozen_drift_reaches_the_tvar1_optimum(simulated_returns):
    returns = simulated_returns[:120] - simulated_returns[:120].mean()
    plain = calibration.fit_mle(calibration.default_spec("tvar1"), returns, max_iter=400)
    frozen = calibration.fit_mle(
        calibration.default_spec("tvar1_trend", fixed={"mu_beta1": 0.0}), returns, max_iter=400
    )
    assert frozen.max_loglik == pytest.approx(plain.max_loglik, abs=1e-6)
    assert frozen.k == plain.k == 3
    assert frozen.theta_full.size == 4

    assert plain.names == ("sigma_w2", "sigma_eps2", "beta1_0")
    assert plain.stderr.shape == (3,)
    assert plain.aic == pytest.approx(2 * 3 - 2 * plain.max_loglik)
    assert plain.n_obs == 120
    assert plain.max_loglik >= calibration.log_likelihood(
        calibration.default_spec("tvar1"), (0.01, 0.1, 0.0), returns
    )


def summary(model, loglik, k):
    names = PARAMS_BY_KIND[model].names[:k]
    return FitSummary(model=model, names=names, max_loglik=loglik, k=k)


def test_compare_models_prefers_the_higher_likelihood_at_equal_size():
    comparison = calibration.compare_models(
        summary(ModelKind.TVAR1, 10.0, 3), summary(ModelKind.TVAR1_KF, 9.0, 3), 0.01
    )
    assert comparison.preferred == "a"
    assert comparison.lr_statistic is None
    assert "not nested" in comparison.note


def test_compare_models_reports_ties():
    fit = summary(ModelKind.TVAR1, 10.0, 3)
    assert calibration.compare_models(fit, fit, 0.01).preferred == "tie"


def test_compare_models_runs_the_lr_test_on_nested_fits():
    comparison = calibration.compare_models(
        summary(ModelKind.TVAR1, 2687.96, 3), summary(ModelKind.TVAR1_TREND, 2688.02, 4), 0.01
    )
    assert comparison.preferred == "a"
    assert comparison.restricted == "a"
    assert comparison.dof == 1
    assert comparison.lr_pvalue == pytest.approx(0.729, abs=1e-3)
    assert comparison.decision == "H0 not rejected at 1%"

    swapped = calibration.compare_models(
        summary(ModelKind.TVAR1_TREND, 2700.0, 4), summary(ModelKind.TVAR1, 2687.96, 3), 0.01
    )
    assert swapped.restricted == "b"
    assert swapped.decision == "H0 rejected at 1%"


KIND_THETAS = [
    ("tvar1", (0.0004, 0.00284, 0.2)),
    ("tvar1", (0.01, 0.1, 0.0)),
    ("tvar1_trend", (0.0004, 0.00284, 0.2, 0.001)),
    ("tvar1_garch", (0.1, 6e-5, 0.13495, 0.85318, 4e-4)),
    ("tvar1_garch", (0.0, 0.001, 0.1, 0.8, 0.01)),
    ("tvar1_kf", (0.0004, 0.00284, 0.2)),
    ("tvar1_trend_kf", (0.0004, 0.00284, 0.2, -0.001)),
    ("tvar1_garch_kf", (0.1, 6e-5, 0.13495, 0.85318, 4e-4)),
]


@pytest.mark.parametrize("kind, theta", KIND_THETAS)
def test_likelihood_agrees_with_the_recorded_filter_run(kind, theta, simulated_returns):
    spec = calibration.default_spec(kind, theta)
    run, _ = calibration.filter_at(spec, theta, simulated_returns)
    assert calibration.log_likelihood(spec, theta, simulated_returns) == pytest.approx(run.total_loglik, rel=1e-9)


def test_likelihood_with_variance_correction_agrees_with_the_recorded_filter_run(simulated_returns):
    theta = (0.1, 6e-5, 0.13495, 0.85318, 4e-4)
    spec = calibration.default_spec("tvar1_garch", theta, variance_correction=True)
    run, _ = calibration.filter_at(spec, theta, simulated_returns)
    plain = calibration.log_likelihood(calibration.default_spec("tvar1_garch", theta), theta, simulated_returns)
    corrected = calibration.log_likelihood(spec, theta, simulated_returns)
    assert corrected == pytest.approx(run.total_loglik, rel=1e-9)
    assert corrected != plain


def test_kernels_report_the_step_where_run_filter_fails():
    params = TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2)
    series = np.array([0.01, 0.02, -0.01, np.inf, 0.03])
    init = initial_conditions("tvar1", params, float(series[0]))
    with pytest.raises(NumericalDivergenceError) as excinfo:
        run_filter(build_tvar1(params), series[1:], init)

    _, failed = kernels.random_walk_ar1_loglik(series[1:], init.mean, init.covariance, 0.0, 0.0004, 0.00284, 1e-6)
    assert failed == excinfo.value.step == 2
    _, failed = kernels.regression_ar1_loglik(series, 0.2, 1.0, 0.0, 0.0004, 0.00284, 0.00284, 0.0, 0.0)
    assert failed == 2
    _, failed = kernels.regression_ar1_loglik(series[:3], 0.2, 1.0, 0.0, 0.0004, 0.00284, 0.00284, 0.0, 0.0)
    assert failed == kernels.NO_FAILURE

    spec = calibration.default_spec("tvar1", params.to_theta())
    assert calibration.log_likelihood(spec, params.to_theta(), series) == DIVERGENCE_SENTINEL


def test_likelihood_gradient_converges_at_second_order(simulated_returns):
    spec = calibration.default_spec("tvar1")
    theta = np.array([0.0004, 0.00284, 0.2])

    def gradient(h):
        step = np.array([0.0, h, 0.0])
        upper = calibration.log_likelihood(spec, theta + step, simulated_returns)
        lower = calibration.log_likelihood(spec, theta - step, simulated_returns)
        return (upper - lower) / (2.0 * h)

    h = 5e-5
    ratio = (gradient(h) - gradient(h / 2)) / (gradient(h / 2) - gradient(h / 4))
    assert ratio == pytest.approx(4.0, abs=0.1)


def test_classical_trend_with_frozen_drift_reaches_the_classical_optimum(simulated_returns):
    returns = simulated_returns[:120] - simulated_returns[:120].mean()
    plain = calibration.fit_mle(calibration.default_spec("tvar1_kf"), returns, max_iter=400)
    frozen = calibration.fit_mle(
        calibration.default_spec("tvar1_trend_kf", fixed={"mu_beta1": 0.0}), returns, max_iter=400
    )
    assert frozen.max_loglik == pytest.approx(plain.max_loglik, abs=1e-6)

    comparison = calibration.compare_models(plain.summary(), frozen.summary(), 0.01)
    assert comparison.model_b == "tvar1_trend_kf"
    assert comparison.restricted is None


def test_compare_models_nests_the_classical_pair():
    comparison = calibration.compare_models(
        summary(ModelKind.TVAR1_KF, 100.0, 3), summary(ModelKind.TVAR1_TREND_KF, 103.0, 4), 0.01
    )
    assert comparison.restricted == "a"
    assert comparison.dof == 1
    assert comparison.lr_statistic == pytest.approx(6.0)


def test_default_theta0_is_shared_by_every_front_end():
    assert calibration.default_theta0("tvar1") == (0.01, 0.1, 0.0)
    assert calibration.default_theta0(ModelKind.TVAR1_KF, configured=[0.02, 0.2, 0.1]) == (0.02, 0.2, 0.1)
    assert calibration.default_theta0("tvar1_garch") is None
    assert calibration.default_theta0("tvar1_trend_kf") is None
    assert calibration.default_theta0("tvar1_garch", (0.0, 0.001, 0.1, 0.8, 0.01)) == (0.0, 0.001, 0.1, 0.8, 0.01)


def test_a_fit_on_1100_returns_takes_seconds():
    returns, _ = simulate_tvar1(TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2), 1100, seed=0)
    returns = returns - returns.mean()
    spec = calibration.default_spec("tvar1")
    calibration.log_likelihood(spec, spec.initial_theta, returns)

    started = time.perf_counter()
    fit = calibration.fit_mle(spec, returns)
    elapsed = time.perf_counter() - started
    assert math.isfinite(fit.max_loglik)
    # 50 such fits have to fit in five minutes.
    assert 50 * elapsed < 300


RECOVERY_TRUTH = TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2)
RECOVERY_SEEDS = 50
BURN_IN = 100


def bounded_draws(count, n=1100, max_seed=2000):
    """Seeds, returns and true paths for the first ``count`` draws whose coefficient stays in (-1, 1)."""
    seed = 0
    while count:
        assert seed < max_seed, "too few draws with a bounded coefficient"
        returns, beta = simulate_tvar1(RECOVERY_TRUTH, n, seed=seed)
        if np.max(np.abs(beta)) < 1.0:
            yield seed, returns, beta
            count -= 1
        seed += 1


@pytest.mark.slow
def test_fit_recovers_the_observation_variance_and_the_coefficient_path():
    started = time.perf_counter()
    covered = tracked = 0
    spec = calibration.default_spec("tvar1")
    for seed, returns, beta in bounded_draws(RECOVERY_SEEDS):
        adjusted = returns - returns.mean()
        fit = calibration.fit_mle(spec, adjusted)
        estimate, stderr = fit.theta_hat[1], fit.stderr[1]
        if math.isfinite(stderr) and abs(estimate - RECOVERY_TRUTH.sigma_eps2) <= 2 * stderr:
            covered += 1

        run, _ = calibration.filter_at(spec, fit.theta_full, adjusted)
        error = np.max(np.abs(run.state_path(0)[BURN_IN:] - beta[BURN_IN:]))
        if error < 0.5:
            tracked += 1

    assert covered >= 45
    assert tracked >= 45
    assert time.perf_counter() - started < 300
