import numpy as np
import pytest

from app.errors import ConfigurationError
from app.services.models import TvAr1GarchParams, TvAr1Params, TvAr1TrendParams
from app.services.simulation import prices_from_returns, simulate_tvar1, simulate_tvar1_garch


def test_tvar1_simulation_is_reproducible():
    params = TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2)
    first = simulate_tvar1(params, 200, seed=11)
    second = simulate_tvar1(params, 200, seed=11)
    other = simulate_tvar1(params, 200, seed=12)
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])
    assert not np.array_equal(first[0], other[0])
    assert first[0].shape == first[1].shape == (200,)
    assert first[1][0] == 0.2


def test_frozen_coefficient_and_trend():
    _, beta = simulate_tvar1(TvAr1Params(sigma_w2=0.0, sigma_eps2=0.01, beta1_0=0.3), 50, seed=1)
    np.testing.assert_array_equal(beta, np.full(50, 0.3))

    _, drifting = simulate_tvar1(
        TvAr1TrendParams(sigma_w2=0.0, sigma_eps2=0.01, beta1_0=0.0, mu_beta1=0.01), 11, seed=1
    )
    assert drifting[-1] == pytest.approx(0.1)


def test_garch_simulation_keeps_the_variance_positive():
    params = TvAr1GarchParams(beta1_0=0.1, omega=0.00006, a1=0.13495, b1=0.85318, sigma_w2=0.0001)
    returns, beta, variance = simulate_tvar1_garch(params, 500, seed=5)
    assert returns.shape == beta.shape == variance.shape == (500,)
    assert variance[0] == pytest.approx(params.unconditional_variance)
    assert (variance > 0).all()
    assert (variance >= params.omega).all()


def test_prices_from_returns():
    prices = prices_from_returns(np.log([1.05, 0.5]), start_price=100.0, start="2019-12")
    np.testing.assert_allclose(prices.closes, [100.0, 105.0, 52.5])
    assert prices.labels == ("2019-12", "2020-01", "2020-02")
    with pytest.raises(ConfigurationError):
        prices_from_returns([0.1], start_price=0.0)
    with pytest.raises(ConfigurationError):
        simulate_tvar1(TvAr1Params(sigma_w2=0.0, sigma_eps2=0.01), 0, seed=1)
