"""
State-space builders for the evolving-efficiency models.

- ``tvar1``: AR(1) with a random-walk coefficient, state ``[beta1, y]``.
- ``tvar1_trend``: the same with a constant drift ``mu_beta1`` on the coefficient.
- ``tvar1_garch``: random-walk coefficient with GARCH(1,1) conditional variance,
  state ``[beta1, y, sigma2]``.
- ``tvar1_kf``, ``tvar1_trend_kf``, ``tvar1_garch_kf``: the classical linear
  formulations where the AR(1) equation is the measurement equation and only
  ``beta1`` is filtered; the GARCH variant feeds past residuals into R_k.

Plus the constant-coefficient AR(n) in companion form.
"""
from __future__ import annotations

import logging
import math
from enum import Enum
from typing import ClassVar

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.config import DEFAULT_OBS_NOISE, DEFAULT_VARIANCE_FLOOR
from app.errors import (
    ConfigurationError,
    NonstationarityError,
    NumericalDivergenceError,
    ParameterDomainError,
)
from app.services.statespace import ModelDefinition, StateEstimate

logger = logging.getLogger(__name__)

# Predicted variances below -NEGATIVE_VARIANCE_TOLERANCE are treated as divergence,
# anything between that and the floor is clamped.
NEGATIVE_VARIANCE_TOLERANCE = 1e-8


class ModelKind(str, Enum):
    TVAR1 = "tvar1"
    TVAR1_TREND = "tvar1_trend"
    TVAR1_GARCH = "tvar1_garch"
    TVAR1_KF = "tvar1_kf"
    TVAR1_TREND_KF = "tvar1_trend_kf"
    TVAR1_GARCH_KF = "tvar1_garch_kf"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ConfigurationError(f"unknown model {value!r}") from None


def _finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ParameterDomainError(f"{name} must be finite, got {value}")


class _Params(BaseModel):
    model_config = ConfigDict(frozen=True)
    names: ClassVar[tuple[str, ...]] = ()

    def to_theta(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.names], dtype=float)

    @classmethod
    def from_theta(cls, theta) -> "_Params":
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != len(cls.names):
            raise ConfigurationError(f"{cls.__name__} expects {len(cls.names)} values, got {theta.size}")
        return cls(**{name: float(value) for name, value in zip(cls.names, theta)})


class TvAr1Params(_Params):
    names: ClassVar[tuple[str, ...]] = ("sigma_w2", "sigma_eps2", "beta1_0")

    sigma_w2: float
    sigma_eps2: float
    beta1_0: float = 0.0

    @model_validator(mode="after")
    def check_domain(self):
        _finite(sigma_w2=self.sigma_w2, sigma_eps2=self.sigma_eps2, beta1_0=self.beta1_0)
        if self.sigma_w2 < 0:
            raise ParameterDomainError(f"sigma_w2 must be >= 0, got {self.sigma_w2}")
        if self.sigma_eps2 <= 0:
            raise ParameterDomainError(f"sigma_eps2 must be > 0, got {self.sigma_eps2}")
        if abs(self.beta1_0) > 1:
            raise ParameterDomainError(f"beta1_0 must lie in [-1, 1], got {self.beta1_0}")
        return self


class TvAr1TrendParams(TvAr1Params):
    names: ClassVar[tuple[str, ...]] = ("sigma_w2", "sigma_eps2", "beta1_0", "mu_beta1")

    mu_beta1: float = 0.0

    @model_validator(mode="after")
    def check_trend(self):
        _finite(mu_beta1=self.mu_beta1)
        return self


class TvAr1GarchParams(_Params):
    names: ClassVar[tuple[str, ...]] = ("beta1_0", "omega", "a1", "b1", "sigma_w2")

    beta1_0: float = 0.0
    omega: float
    a1: float
    b1: float
    sigma_w2: float

    @model_validator(mode="after")
    def check_domain(self):
        _finite(beta1_0=self.beta1_0, omega=self.omega, a1=self.a1, b1=self.b1, sigma_w2=self.sigma_w2)
        if abs(self.beta1_0) > 1:
            raise ParameterDomainError(f"beta1_0 must lie in [-1, 1], got {self.beta1_0}")
        if self.omega <= 0:
            raise ParameterDomainError(f"omega must be > 0, got {self.omega}")
        if self.a1 < 0 or self.b1 < 0:
            raise ParameterDomainError("a1 and b1 must be >= 0")
        if self.sigma_w2 < 0:
            raise ParameterDomainError(f"sigma_w2 must be >= 0, got {self.sigma_w2}")
        if self.a1 + self.b1 >= 1:
            raise NonstationarityError(f"a1 + b1 = {self.a1 + self.b1} must be < 1")
        return self

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.a1 - self.b1)


class CompanionArParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: tuple[float, ...]

    @model_validator(mode="after")
    def check_order(self):
        if len(self.beta) < 1:
            raise ParameterDomainError("companion AR needs at least one coefficient")
        _finite(**{f"beta{i + 1}": b for i, b in enumerate(self.beta)})
        return self


PARAMS_BY_KIND: dict[ModelKind, type[_Params]] = {
    ModelKind.TVAR1: TvAr1Params,
    ModelKind.TVAR1_TREND: TvAr1TrendParams,
    ModelKind.TVAR1_GARCH: TvAr1GarchParams,
    ModelKind.TVAR1_KF: TvAr1Params,
    ModelKind.TVAR1_TREND_KF: TvAr1TrendParams,
    ModelKind.TVAR1_GARCH_KF: TvAr1GarchParams,
}

CLASSICAL_KINDS = frozenset({ModelKind.TVAR1_KF, ModelKind.TVAR1_TREND_KF, ModelKind.TVAR1_GARCH_KF})


def _check_obs_noise(obs_noise: float) -> None:
    if not (math.isfinite(obs_noise) and obs_noise > 0):
        raise ParameterDomainError(f"observation noise must be > 0, got {obs_noise}")


def _random_walk_ar1(sigma_w2: float, sigma_eps2: float, mu: float, obs_noise: float, kind: ModelKind) -> ModelDefinition:
    def drift(x, k):
        return np.array([x[0] + mu, x[0] * x[1] + mu * x[1]])

    def jacobian_state(x, k):
        return np.array([[1.0, 0.0], [x[1], x[0] + mu]])

    def jacobian_noise(x, k):
        return np.array([[1.0, 0.0], [x[1], 1.0]])

    def transition(x, u, k):
        beta = x[0] + mu + u[0]
        return np.array([beta, beta * x[1] + u[1]])

    return ModelDefinition(
        state_dim=2,
        noise_dim=2,
        obs_dim=1,
        drift=drift,
        drift_jacobian_state=jacobian_state,
        drift_jacobian_noise=jacobian_noise,
        process_noise_cov=np.diag([sigma_w2, sigma_eps2]),
        obs_matrix=np.array([[0.0, 1.0]]),
        obs_noise_cov=np.array([[obs_noise]]),
        transition=transition,
        kind=kind.value,
    )


def build_tvar1(params: TvAr1Params, obs_noise: float = DEFAULT_OBS_NOISE) -> ModelDefinition:
    _check_obs_noise(obs_noise)
    return _random_walk_ar1(params.sigma_w2, params.sigma_eps2, 0.0, obs_noise, ModelKind.TVAR1)


def build_tvar1_trend(params: TvAr1TrendParams, obs_noise: float = DEFAULT_OBS_NOISE) -> ModelDefinition:
    _check_obs_noise(obs_noise)
    return _random_walk_ar1(
        params.sigma_w2, params.sigma_eps2, params.mu_beta1, obs_noise, ModelKind.TVAR1_TREND
    )


def build_tvar1_garch(
    params: TvAr1GarchParams,
    obs_noise: float = DEFAULT_OBS_NOISE,
    *,
    variance_correction: bool = False,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> ModelDefinition:
    """
    GARCH(1,1) model linearized at zero noise, noise vector ``(w, eps_{k+1}, eps_k)``.

    With ``variance_correction`` the drift uses ``E[eps_k^2] = 1``, i.e. the a1 term
    is kept in the predicted variance.
    """
    _check_obs_noise(obs_noise)
    omega, a1, b1 = params.omega, params.a1, params.b1
    persistence = a1 + b1 if variance_correction else b1

    def floored(x3: float) -> float:
        if not math.isfinite(x3) or x3 < -NEGATIVE_VARIANCE_TOLERANCE:
            raise NumericalDivergenceError(f"conditional variance went negative ({x3})")
        return max(x3, variance_floor)

    def drift(x, k):
        return np.array([x[0], x[0] * x[1], omega + persistence * x[2]])

    def jacobian_state(x, k):
        return np.array([
            [1.0, 0.0, 0.0],
            [x[1], x[0], 0.0],
            [0.0, 0.0, persistence],
        ])

    def jacobian_noise(x, k):
        scale = math.sqrt(omega + persistence * floored(x[2]))
        return np.array([
            [1.0, 0.0, 0.0],
            [x[1], scale, 0.0],
            [0.0, 0.0, 0.0],
        ])

    def transition(x, u, k):
        variance = omega + a1 * floored(x[2]) * u[2] ** 2 + b1 * floored(x[2])
        beta = x[0] + u[0]
        return np.array([beta, beta * x[1] + math.sqrt(variance) * u[1], variance])

    return ModelDefinition(
        state_dim=3,
        noise_dim=3,
        obs_dim=1,
        drift=drift,
        drift_jacobian_state=jacobian_state,
        drift_jacobian_noise=jacobian_noise,
        process_noise_cov=np.diag([params.sigma_w2, 1.0, 1.0]),
        obs_matrix=np.array([[0.0, 1.0, 0.0]]),
        obs_noise_cov=np.array([[obs_noise]]),
        transition=transition,
        floor_check=lambda x: x[2] < variance_floor,
        kind=ModelKind.TVAR1_GARCH.value,
    )


def _regression_ar1(
    sigma_w2: float,
    mu: float,
    obs_noise_cov: float,
    returns,
    kind: ModelKind,
    obs_noise_recursion=None,
) -> ModelDefinition:
    regressors = np.asarray(returns, dtype=float).reshape(-1)

    def obs_matrix_at(k):
        if k < 1 or k > regressors.size - 1:
            raise ConfigurationError(f"no regressor for time index {k}")
        return np.array([[regressors[k - 1]]])

    def transition(x, u, k):
        return np.array([x[0] + mu + u[0]])

    return ModelDefinition(
        state_dim=1,
        noise_dim=1,
        obs_dim=1,
        drift=lambda x, k: np.array([x[0] + mu]),
        drift_jacobian_state=lambda x, k: np.eye(1),
        drift_jacobian_noise=lambda x, k: np.eye(1),
        process_noise_cov=np.array([[sigma_w2]]),
        obs_matrix=np.zeros((1, 1)),
        obs_noise_cov=np.array([[obs_noise_cov]]),
        transition=transition,
        obs_matrix_at=obs_matrix_at,
        obs_noise_recursion=obs_noise_recursion,
        kind=kind.value,
    )


def build_tvar1_kf(params: TvAr1Params, returns) -> ModelDefinition:
    """
    Classical formulation: ``beta1`` is the only state and ``y_k = y_{k-1} beta1_k + eps_k``
    is the measurement, so ``H_k = [y_{k-1}]`` and ``R = sigma_eps2``.

    ``returns`` is the full series; the state at time index ``k`` is observed through
    ``returns[k]`` with regressor ``returns[k - 1]``.
    """
    return _regression_ar1(params.sigma_w2, 0.0, params.sigma_eps2, returns, ModelKind.TVAR1_KF)


def build_tvar1_trend_kf(params: TvAr1TrendParams, returns) -> ModelDefinition:
    """``build_tvar1_kf`` with the coefficient drifting by ``mu_beta1`` per step."""
    return _regression_ar1(
        params.sigma_w2, params.mu_beta1, params.sigma_eps2, returns, ModelKind.TVAR1_TREND_KF
    )


def build_tvar1_garch_kf(params: TvAr1GarchParams, returns) -> ModelDefinition:
    """
    Classical GARCH test: same measurement equation as ``build_tvar1_kf`` but
    ``R_k = omega + a1 e_{k-1}^2 + b1 R_{k-1}`` driven by the previous innovation,
    starting from the unconditional variance.
    """
    omega, a1, b1 = params.omega, params.a1, params.b1

    def next_variance(R, residual):
        return np.array([[omega + a1 * float(residual[0]) ** 2 + b1 * float(R[0, 0])]])

    return _regression_ar1(
        params.sigma_w2,
        0.0,
        params.unconditional_variance,
        returns,
        ModelKind.TVAR1_GARCH_KF,
        obs_noise_recursion=next_variance,
    )


def companion_matrix(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    n = beta.size
    F = np.zeros((n, n))
    F[0, :] = beta
    if n > 1:
        F[1:, :-1] = np.eye(n - 1)
    return F


def build_companion_ar(params: CompanionArParams, noise_vars: tuple[float, float]) -> ModelDefinition:
    """Constant AR(n) as a linear model; only the newest return is observed."""
    sigma_eps2, obs_noise = noise_vars
    if sigma_eps2 < 0:
        raise ParameterDomainError(f"sigma_eps2 must be >= 0, got {sigma_eps2}")
    _check_obs_noise(obs_noise)
    F = companion_matrix(params.beta)
    n = F.shape[0]
    G = np.zeros((n, 1))
    G[0, 0] = 1.0
    H = np.zeros((1, n))
    H[0, 0] = 1.0

    return ModelDefinition(
        state_dim=n,
        noise_dim=1,
        obs_dim=1,
        drift=lambda x, k: F @ x,
        drift_jacobian_state=lambda x, k: F,
        drift_jacobian_noise=lambda x, k: G,
        process_noise_cov=np.array([[sigma_eps2]]),
        obs_matrix=H,
        obs_noise_cov=np.array([[obs_noise]]),
        transition=lambda x, u, k: F @ x + G @ u,
        kind="companion_ar",
    )


def build_model(
    kind: ModelKind | str,
    params: _Params,
    *,
    obs_noise: float = DEFAULT_OBS_NOISE,
    returns=None,
    variance_correction: bool = False,
) -> ModelDefinition:
    kind = ModelKind.parse(kind)
    if kind is ModelKind.TVAR1:
        return build_tvar1(params, obs_noise)
    if kind is ModelKind.TVAR1_TREND:
        return build_tvar1_trend(params, obs_noise)
    if kind is ModelKind.TVAR1_GARCH:
        return build_tvar1_garch(params, obs_noise, variance_correction=variance_correction)
    if returns is None:
        raise ConfigurationError("the classical filter needs the return series as regressors")
    if kind is ModelKind.TVAR1_TREND_KF:
        return build_tvar1_trend_kf(params, returns)
    if kind is ModelKind.TVAR1_GARCH_KF:
        return build_tvar1_garch_kf(params, returns)
    return build_tvar1_kf(params, returns)


def bounds_prior(beta_upper: float = 1.0, beta_lower: float = -1.0) -> tuple[float, float]:
    """Prior mean and variance for an initial coefficient known only by its bounds."""
    if beta_upper < beta_lower:
        raise ParameterDomainError("upper bound below lower bound")
    mean = 0.5 * (beta_upper + beta_lower)
    alpha = max(abs(beta_upper - mean), abs(beta_lower - mean))
    return mean, alpha ** 2


def initial_conditions(
    model_kind: ModelKind | str,
    params: _Params,
    first_return: float,
    *,
    free_beta: bool = True,
    beta_bounds: tuple[float, float] = (1.0, -1.0),
) -> StateEstimate:
    """
    Filter initials at t_1. With ``free_beta=False`` the coefficient entry comes from
    ``bounds_prior`` instead of ``params.beta1_0``.
    """
    kind = ModelKind.parse(model_kind)
    beta, beta_var = params.beta1_0, 1.0
    if not free_beta:
        beta, beta_var = bounds_prior(*beta_bounds)

    if kind in CLASSICAL_KINDS:
        return StateEstimate(np.array([beta]), np.array([[beta_var]]))
    if kind is ModelKind.TVAR1_GARCH:
        mean = np.array([beta, first_return, params.unconditional_variance])
    else:
        mean = np.array([beta, first_return])
    covariance = np.eye(mean.size)
    covariance[0, 0] = beta_var
    return StateEstimate(mean, covariance)
