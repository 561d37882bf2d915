"""
Synthetic return series from the evolving-efficiency models, seeded and reproducible.
"""
from __future__ import annotations

import math

import numpy as np
import pandas as pd

from app.errors import ConfigurationError
from app.services.ingest import PriceSeries
from app.services.models import TvAr1GarchParams, TvAr1Params


def _check_length(n: int) -> None:
    if n < 1:
        raise ConfigurationError(f"number of observations must be >= 1, got {n}")


def simulate_tvar1(params: TvAr1Params, n: int, seed: int, y0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Random-walk AR(1): ``beta_{k+1} = beta_k + mu + w``, ``y_{k+1} = beta_{k+1} y_k + eps``
    with ``beta_1 = beta1_0``. ``mu`` is taken from trend parameters when present.
    Returns ``(returns, beta)``, both of length ``n``.
    """
    _check_length(n)
    mu = getattr(params, "mu_beta1", 0.0)
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, math.sqrt(params.sigma_w2), n)
    eps = rng.normal(0.0, math.sqrt(params.sigma_eps2), n)

    beta = np.empty(n)
    y = np.empty(n)
    beta[0] = params.beta1_0
    y[0] = beta[0] * y0 + eps[0]
    for k in range(1, n):
        beta[k] = beta[k - 1] + mu + w[k]
        y[k] = beta[k] * y[k - 1] + eps[k]
    return y, beta


def simulate_tvar1_garch(
    params: TvAr1GarchParams, n: int, seed: int, y0: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Random-walk AR(1) with GARCH(1,1) errors, starting from the unconditional variance.
    Returns ``(returns, beta, variance)``.
    """
    _check_length(n)
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, math.sqrt(params.sigma_w2), n)
    shocks = rng.standard_normal(n)

    beta = np.empty(n)
    y = np.empty(n)
    variance = np.empty(n)
    beta[0] = params.beta1_0
    variance[0] = params.unconditional_variance
    y[0] = beta[0] * y0 + math.sqrt(variance[0]) * shocks[0]
    for k in range(1, n):
        beta[k] = beta[k - 1] + w[k]
        variance[k] = params.omega + (params.a1 * shocks[k - 1] ** 2 + params.b1) * variance[k - 1]
        y[k] = beta[k] * y[k - 1] + math.sqrt(variance[k]) * shocks[k]
    return y, beta, variance


def prices_from_returns(returns, start_price: float = 100.0, start: str = "2000-01") -> PriceSeries:
    """Monthly price path whose log returns are ``returns``; the first price is ``start_price``."""
    values = np.asarray(returns, dtype=float).reshape(-1)
    if start_price <= 0:
        raise ConfigurationError(f"start price must be > 0, got {start_price}")
    closes = start_price * np.exp(np.concatenate([[0.0], np.cumsum(values)]))
    periods = pd.period_range(start=start, periods=values.size + 1, freq="M")
    return PriceSeries(
        dates=tuple(p.to_timestamp().date() for p in periods),
        closes=closes,
        labels=tuple(p.strftime("%Y-%m") for p in periods),
    )
