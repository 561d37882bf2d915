"""
Model-free reference statistics: summary moments, sample autocorrelations,
Ljung-Box tests and the moving-window autocorrelation path.

Undefined values are NaN (or None for the summary moments), never exceptions,
except where the input itself is out of domain.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from app.config import DEFAULT_ALPHA, DEFAULT_WINDOW
from app.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

TABLE_LAGS = (1, 10, 15)


def _values(returns) -> np.ndarray:
    values = getattr(returns, "values", returns)
    return np.ascontiguousarray(np.asarray(values, dtype=float).reshape(-1))


@dataclass(frozen=True)
class SummaryStats:
    n_obs: int
    mean: float
    median: float
    std_dev: float
    skewness: float | None
    excess_kurtosis: float | None


class LjungBox(NamedTuple):
    q: float
    p: float


@dataclass(frozen=True)
class LagRow:
    lag: int
    rho: float
    q: float
    p: float


@dataclass(frozen=True)
class RollingResult:
    start_indices: np.ndarray
    rho1_path: np.ndarray
    confidence_bound: float
    pvalue_path: np.ndarray
    window: int
    lag: int = 1

    def __len__(self) -> int:
        return self.rho1_path.size


def summary_stats(returns) -> SummaryStats:
    values = _values(returns)
    n = values.size
    if n < 2:
        raise DomainError(f"summary statistics need at least 2 observations, got {n}")

    centered = values - values.mean()
    m2 = float(np.mean(centered ** 2))
    skewness = kurtosis = None
    if m2 > 0:
        skewness = float(stats.skew(values, bias=True))
        kurtosis = float(stats.kurtosis(values, fisher=True, bias=True))

    return SummaryStats(
        n_obs=n,
        mean=float(values.mean()),
        median=float(np.median(values)),
        std_dev=float(values.std(ddof=1)),
        skewness=skewness,
        excess_kurtosis=kurtosis,
    )


def _acf_rows(windows: np.ndarray, lag: int) -> np.ndarray:
    """Lag-``lag`` autocorrelation of every row, NaN for zero-variance rows."""
    centered = windows - windows.mean(axis=1, keepdims=True)
    denominator = np.sum(centered * centered, axis=1)
    if lag == 0:
        numerator = denominator.copy()
    else:
        numerator = np.sum(centered[:, lag:] * centered[:, :-lag], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denominator > 0, numerator / denominator, np.nan)


def sample_autocorrelation(returns, lag: int) -> float:
    values = _values(returns)
    if not 0 <= lag < values.size:
        raise DomainError(f"lag must satisfy 0 <= lag < {values.size}, got {lag}")
    return float(_acf_rows(values[np.newaxis, :], lag)[0])


def chi2_sf(x: float, dof: int) -> float:
    """Chi-squared upper tail via the regularized upper incomplete gamma function."""
    if dof < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {dof}")
    if math.isnan(x):
        return math.nan
    if x < 0:
        raise DomainError(f"chi-squared statistic must be >= 0, got {x}")
    return float(special.gammaincc(0.5 * dof, 0.5 * x))


def _q_statistic(rhos: np.ndarray, n: int) -> np.ndarray:
    lags = np.arange(1, rhos.shape[-1] + 1)
    return n * (n + 2) * np.sum(rhos ** 2 / (n - lags), axis=-1)


def ljung_box(returns, max_lag: int) -> LjungBox:
    values = _values(returns)
    n = values.size
    if not 1 <= max_lag < n:
        raise DomainError(f"max_lag must satisfy 1 <= max_lag < {n}, got {max_lag}")
    rhos = np.array([sample_autocorrelation(values, lag) for lag in range(1, max_lag + 1)])
    q = float(_q_statistic(rhos, n))
    if math.isnan(q):
        return LjungBox(math.nan, math.nan)
    return LjungBox(q, chi2_sf(q, max_lag))


def lag_table(returns, lags=TABLE_LAGS) -> list[LagRow]:
    """Autocorrelation and Q-test at each lag; lags the sample cannot support are NaN."""
    values = _values(returns)
    rows = []
    for lag in lags:
        if lag >= values.size:
            rows.append(LagRow(lag, math.nan, math.nan, math.nan))
            continue
        q, p = ljung_box(values, lag)
        rows.append(LagRow(lag, sample_autocorrelation(values, lag), q, p))
    return rows


def confidence_bound(window: int, alpha: float = DEFAULT_ALPHA) -> float:
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    return float(stats.norm.ppf(1.0 - alpha / 2.0) / math.sqrt(window))


def rolling_autocorrelation(
    returns, w: int = DEFAULT_WINDOW, lag: int = 1, alpha: float = DEFAULT_ALPHA
) -> RollingResult:
    """
    Sample autocorrelation on every window ``y[k-w+1..k]``, ``k = w..N`` (1-based),
    with the Ljung-Box p-value at ``lag`` computed on the same window.
    """
    values = _values(returns)
    n = values.size
    if w > n:
        raise ConfigurationError(f"window {w} exceeds the number of observations {n}")
    if not 1 <= lag < w:
        raise ConfigurationError(f"lag must satisfy 1 <= lag < window, got lag={lag}, window={w}")

    windows = np.ascontiguousarray(np.lib.stride_tricks.sliding_window_view(values, w))
    rhos = np.column_stack([_acf_rows(windows, k) for k in range(1, lag + 1)])
    q = _q_statistic(rhos, w)
    pvalues = np.array([chi2_sf(float(value), lag) for value in q])

    degenerate = int(np.isnan(rhos[:, -1]).sum())
    if degenerate:
        logger.warning("%d zero-variance windows marked undefined", degenerate)

    return RollingResult(
        start_indices=np.arange(w, n + 1),
        rho1_path=rhos[:, lag - 1],
        confidence_bound=confidence_bound(w, alpha),
        pvalue_path=pvalues,
        window=w,
        lag=lag,
    )
