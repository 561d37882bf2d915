"""
Maximum-likelihood calibration driven by the filter's prediction-error decomposition.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import minimize

from app.config import (
    DEFAULT_FTOL,
    DEFAULT_MAX_ITER,
    DEFAULT_OBS_NOISE,
    DEFAULT_THETA0,
    DEFAULT_VARIANCE_FLOOR,
    DEFAULT_XTOL,
    DIVERGENCE_SENTINEL,
)
from app.errors import ConfigurationError, DomainError, NonstationarityError, ParameterDomainError
from app.services import kernels
from app.services.diagnostics import chi2_sf
from app.services.models import (
    NEGATIVE_VARIANCE_TOLERANCE,
    PARAMS_BY_KIND,
    ModelKind,
    build_model,
    initial_conditions,
)
from app.services.statespace import FilterRun, StateEstimate, run_filter

logger = logging.getLogger(__name__)

# Objective values beyond this magnitude are the divergence barrier, not data.
_BARRIER = 1e290

DEFAULT_BOUNDS: dict[ModelKind, tuple[tuple[float, float], ...]] = {
    ModelKind.TVAR1: ((0.0, 1.0), (1e-8, 1.0), (-1.0, 1.0)),
    ModelKind.TVAR1_TREND: ((0.0, 1.0), (1e-8, 1.0), (-1.0, 1.0), (-0.5, 0.5)),
    ModelKind.TVAR1_GARCH: ((-1.0, 1.0), (1e-8, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
    ModelKind.TVAR1_KF: ((0.0, 1.0), (1e-8, 1.0), (-1.0, 1.0)),
    ModelKind.TVAR1_TREND_KF: ((0.0, 1.0), (1e-8, 1.0), (-1.0, 1.0), (-0.5, 0.5)),
    ModelKind.TVAR1_GARCH_KF: ((-1.0, 1.0), (1e-8, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
}

DEFAULT_START: dict[ModelKind, tuple[float, ...]] = {
    ModelKind.TVAR1: DEFAULT_THETA0,
    ModelKind.TVAR1_TREND: DEFAULT_THETA0 + (0.0,),
    ModelKind.TVAR1_GARCH: (0.0, 0.001, 0.1, 0.8, 0.01),
    ModelKind.TVAR1_KF: DEFAULT_THETA0,
    ModelKind.TVAR1_TREND_KF: DEFAULT_THETA0 + (0.0,),
    ModelKind.TVAR1_GARCH_KF: (0.0, 0.001, 0.1, 0.8, 0.01),
}

NESTED_KINDS = {
    (ModelKind.TVAR1, ModelKind.TVAR1_TREND),
    (ModelKind.TVAR1_KF, ModelKind.TVAR1_TREND_KF),
}

# Kinds whose starting point the THETA0_TVAR1 setting (and --theta0 default) covers.
_THETA0_KINDS = (ModelKind.TVAR1, ModelKind.TVAR1_KF)


class ParameterSpec(BaseModel):
    """
    Search space for one model: full parameter names, box bounds, the starting point
    and optionally some parameters frozen at fixed values.
    """
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_kind: ModelKind
    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    initial_theta: tuple[float, ...]
    fixed: dict[str, float] = {}
    obs_noise: float = DEFAULT_OBS_NOISE
    variance_correction: bool = False

    @model_validator(mode="after")
    def check_consistency(self):
        expected = PARAMS_BY_KIND[self.model_kind].names
        if self.names != expected:
            raise ConfigurationError(f"{self.model_kind.value} parameters are {expected}, got {self.names}")
        sizes = {len(self.lower), len(self.upper), len(self.initial_theta)}
        if sizes != {len(self.names)}:
            raise ConfigurationError("bounds and initial theta must match the parameter names")
        for name, lo, start, hi in zip(self.names, self.lower, self.initial_theta, self.upper):
            if not lo <= start <= hi:
                raise ConfigurationError(f"{name}: need {lo} <= {start} <= {hi}")
        unknown = set(self.fixed) - set(self.names)
        if unknown:
            raise ConfigurationError(f"cannot fix unknown parameters {sorted(unknown)}")
        if not (math.isfinite(self.obs_noise) and self.obs_noise > 0):
            raise ParameterDomainError(f"observation noise must be > 0, got {self.obs_noise}")
        return self

    @property
    def free_mask(self) -> np.ndarray:
        return np.array([name not in self.fixed for name in self.names])

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(name for name in self.names if name not in self.fixed)

    def free_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        mask = self.free_mask
        return np.asarray(self.lower)[mask], np.asarray(self.upper)[mask]

    def free_start(self) -> np.ndarray:
        return np.asarray(self.initial_theta, dtype=float)[self.free_mask]

    def expand(self, free_theta) -> np.ndarray:
        """Full theta from the free entries, fixed values filled in."""
        theta = np.array([self.fixed.get(name, math.nan) for name in self.names], dtype=float)
        theta[self.free_mask] = np.asarray(free_theta, dtype=float).reshape(-1)
        return theta

    def params(self, theta):
        return PARAMS_BY_KIND[self.model_kind].from_theta(theta)


def default_theta0(model_kind: ModelKind | str, theta0=None, configured=DEFAULT_THETA0) -> tuple[float, ...] | None:
    """
    Starting point handed to ``default_spec``: ``theta0`` when given, ``configured``
    for tvar1 and tvar1_kf, otherwise None so the per-kind ``DEFAULT_START`` applies.
    """
    if theta0 is not None:
        return tuple(float(v) for v in theta0)
    if ModelKind.parse(model_kind) in _THETA0_KINDS:
        return tuple(float(v) for v in configured)
    return None


def default_spec(
    model_kind: ModelKind | str,
    theta0=None,
    *,
    fixed: dict[str, float] | None = None,
    obs_noise: float = DEFAULT_OBS_NOISE,
    variance_correction: bool = False,
) -> ParameterSpec:
    kind = ModelKind.parse(model_kind)
    names = PARAMS_BY_KIND[kind].names
    start = list(DEFAULT_START[kind] if theta0 is None else theta0)
    if len(start) != len(names):
        raise ConfigurationError(f"{kind.value} needs {len(names)} starting values ({', '.join(names)})")
    fixed = dict(fixed or {})
    for i, name in enumerate(names):
        if name in fixed:
            start[i] = fixed[name]
    bounds = DEFAULT_BOUNDS[kind]
    return ParameterSpec(
        model_kind=kind,
        names=names,
        lower=tuple(lo for lo, _ in bounds),
        upper=tuple(hi for _, hi in bounds),
        initial_theta=tuple(float(v) for v in start),
        fixed=fixed,
        obs_noise=obs_noise,
        variance_correction=variance_correction,
    )


@dataclass(frozen=True)
class FitResult:
    model_kind: ModelKind
    names: tuple[str, ...]
    theta_hat: np.ndarray
    stderr: np.ndarray
    max_loglik: float
    aic: float
    n_obs: int
    converged: bool
    iterations: int
    theta_full: np.ndarray
    fixed: dict[str, float] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.theta_hat.size)

    def summary(self) -> "FitSummary":
        return FitSummary(
            model=self.model_kind, names=self.names, max_loglik=self.max_loglik, k=self.k, aic=self.aic
        )


class FitSummary(BaseModel):
    """The part of a fit the model comparison needs."""
    model_config = ConfigDict(frozen=True)

    model: ModelKind
    names: tuple[str, ...]
    max_loglik: float
    k: int
    aic: float | None = None


@dataclass(frozen=True)
class ModelComparison:
    model_a: str
    model_b: str
    aic_a: float
    aic_b: float
    preferred: str
    restricted: str | None = None
    dof: int | None = None
    lr_statistic: float | None = None
    lr_pvalue: float | None = None
    decision: str | None = None
    note: str | None = None


def _series(returns) -> np.ndarray:
    return np.asarray(getattr(returns, "values", returns), dtype=float).reshape(-1)


def filter_at(spec: ParameterSpec, theta, returns) -> tuple[FilterRun, StateEstimate]:
    """Build the model at ``theta`` and filter y(t_2..t_N) from initials at t_1."""
    y = _series(returns)
    if y.size == 0:
        raise DomainError("the return series is empty")
    params = spec.params(theta)
    model = build_model(
        spec.model_kind,
        params,
        obs_noise=spec.obs_noise,
        returns=y,
        variance_correction=spec.variance_correction,
    )
    init = initial_conditions(spec.model_kind, params, float(y[0]))
    return run_filter(model, y[1:], init), init


def _compiled_loglik(spec: ParameterSpec, params, y: np.ndarray, init: StateEstimate) -> tuple[float, int]:
    """Same recursion as ``run_filter`` on the built model, via the matching kernel."""
    kind = spec.model_kind
    mean, cov = init.mean, init.covariance
    if kind in (ModelKind.TVAR1, ModelKind.TVAR1_TREND):
        return kernels.random_walk_ar1_loglik(
            np.ascontiguousarray(y[1:]), mean, cov,
            getattr(params, "mu_beta1", 0.0), params.sigma_w2, params.sigma_eps2, spec.obs_noise,
        )
    if kind is ModelKind.TVAR1_GARCH:
        persistence = params.a1 + params.b1 if spec.variance_correction else params.b1
        return kernels.garch_ar1_loglik(
            np.ascontiguousarray(y[1:]), mean, cov, params.omega, persistence, params.sigma_w2,
            spec.obs_noise, DEFAULT_VARIANCE_FLOOR, NEGATIVE_VARIANCE_TOLERANCE,
        )
    if kind is ModelKind.TVAR1_GARCH_KF:
        r0, omega, a1, b1 = params.unconditional_variance, params.omega, params.a1, params.b1
    else:
        r0, omega, a1, b1 = params.sigma_eps2, params.sigma_eps2, 0.0, 0.0
    return kernels.regression_ar1_loglik(
        y, float(mean[0]), float(cov[0, 0]),
        getattr(params, "mu_beta1", 0.0), params.sigma_w2, r0, omega, a1, b1,
    )


def log_likelihood(spec: ParameterSpec, theta, returns) -> float:
    """
    Filter log-likelihood without the 2*pi constant. Divergence and a nonstationary
    GARCH pair return ``DIVERGENCE_SENTINEL`` so optimizers see a barrier.

    Runs the compiled kernel for the model kind; ``filter_at`` gives the same value
    with every step recorded.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != len(spec.names):
        raise ConfigurationError(f"theta has {theta.size} entries, expected {len(spec.names)}")
    for name, value, lo, hi in zip(spec.names, theta, spec.lower, spec.upper):
        if not lo <= value <= hi:
            raise ParameterDomainError(f"{name}={value} outside [{lo}, {hi}]")
    y = _series(returns)
    if y.size == 0:
        raise DomainError("the return series is empty")
    try:
        params = spec.params(theta)
    except NonstationarityError:
        return DIVERGENCE_SENTINEL
    init = initial_conditions(spec.model_kind, params, float(y[0]))
    total, failed_step = _compiled_loglik(spec, params, y, init)
    if failed_step != kernels.NO_FAILURE:
        logger.debug("filter diverged at theta=%s, step %d", theta, failed_step)
        return DIVERGENCE_SENTINEL
    if not math.isfinite(total):
        return DIVERGENCE_SENTINEL
    return float(total)


def _initial_simplex(start: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    width = upper - lower
    steps = 0.1 * np.maximum(np.abs(start), 0.1 * width)
    simplex = np.tile(start, (start.size + 1, 1))
    for i, step in enumerate(steps):
        vertex = start[i] + step
        if vertex > upper[i]:
            vertex = start[i] - step
        simplex[i + 1, i] = min(max(vertex, lower[i]), upper[i])
    return simplex


def fit_mle(
    spec: ParameterSpec,
    returns,
    *,
    max_iter: int = DEFAULT_MAX_ITER,
    xtol: float = DEFAULT_XTOL,
    ftol: float = DEFAULT_FTOL,
) -> FitResult:
    """
    Maximize the filter likelihood over the box with a bounded Nelder-Mead search,
    restarted once from the best point found.
    """
    y = _series(returns)
    lower, upper = spec.free_bounds()

    def objective(free_theta):
        clipped = np.clip(free_theta, lower, upper)
        value = -log_likelihood(spec, spec.expand(clipped), y)
        logger.debug("theta=%s -loglik=%.10g", clipped, value)
        return value

    logger.info("fitting %s to %d returns", spec.model_kind.value, y.size)
    options = {"xatol": xtol, "fatol": ftol, "maxiter": max_iter, "maxfev": 2 * max_iter}
    start = spec.free_start()
    iterations = 0
    best = None
    converged = False
    for attempt in range(2):
        result = minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=list(zip(lower, upper)),
            options={**options, "initial_simplex": _initial_simplex(start, lower, upper)},
        )
        iterations += int(result.nit)
        if best is None or result.fun <= best.fun:
            best = result
        converged = bool(result.success)
        start = np.clip(best.x, lower, upper)
        if attempt == 0:
            logger.info("restarting simplex search from the best point (-loglik=%.6f)", best.fun)

    theta_free = np.clip(best.x, lower, upper)
    theta_full = spec.expand(theta_free)
    max_loglik = log_likelihood(spec, theta_full, y)
    if not converged:
        logger.warning("optimizer stopped without meeting tolerances after %d iterations", iterations)

    stderr = standard_errors(
        lambda th: -log_likelihood(spec, spec.expand(th), y), theta_free, lower=lower, upper=upper
    )
    k = theta_free.size
    logger.info("fit of %s finished: max L=%.6f after %d iterations", spec.model_kind.value, max_loglik, iterations)
    return FitResult(
        model_kind=spec.model_kind,
        names=spec.free_names,
        theta_hat=theta_free,
        stderr=stderr,
        max_loglik=max_loglik,
        aic=aic(max_loglik, k),
        n_obs=int(y.size),
        converged=converged,
        iterations=iterations,
        theta_full=theta_full,
        fixed=dict(spec.fixed),
    )


def standard_errors(
    objective: Callable[[np.ndarray], float],
    theta_hat,
    *,
    lower=None,
    upper=None,
) -> np.ndarray:
    """
    Square roots of the diagonal of the inverse central-difference Hessian of a
    negative log-likelihood, step ``1e-4 * max(|theta_i|, 1)`` shrunk to half the
    distance to the nearest bound for interior points closer than that.

    Entries are NaN (unavailable) when the parameter sits on a bound, the stencil
    touches the divergence barrier, there is no curvature above rounding noise, or
    the inverse has a nonpositive diagonal.
    """
    theta = np.asarray(theta_hat, dtype=float).reshape(-1)
    p = theta.size
    h = 1e-4 * np.maximum(np.abs(theta), 1.0)
    lo = np.full(p, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(p, np.inf) if upper is None else np.asarray(upper, dtype=float)
    available = (theta > lo) & (theta < hi)
    room = np.minimum(theta - lo, hi - theta)
    h = np.where(available, np.minimum(h, 0.5 * room), h)

    def evaluate(point):
        value = float(objective(point))
        return value if math.isfinite(value) and abs(value) < _BARRIER else math.nan

    f0 = evaluate(theta)
    stderr = np.full(p, np.nan)
    if math.isnan(f0):
        logger.warning("standard errors unavailable: objective undefined at the optimum")
        return stderr

    hessian = np.full((p, p), np.nan)
    index = np.flatnonzero(available)
    for a, i in enumerate(index):
        e_i = np.zeros(p)
        e_i[i] = h[i]
        hessian[i, i] = (evaluate(theta + e_i) - 2.0 * f0 + evaluate(theta - e_i)) / h[i] ** 2
        for j in index[:a]:
            e_j = np.zeros(p)
            e_j[j] = h[j]
            value = (
                evaluate(theta + e_i + e_j)
                - evaluate(theta + e_i - e_j)
                - evaluate(theta - e_i + e_j)
                + evaluate(theta - e_i - e_j)
            ) / (4.0 * h[i] * h[j])
            hessian[i, j] = hessian[j, i] = value

    noise = 1e3 * np.finfo(float).eps * max(abs(f0), 1.0) / h ** 2
    diagonal = np.diag(hessian)
    usable = available & np.isfinite(diagonal) & (diagonal > noise)
    for i in np.flatnonzero(usable):
        if not np.all(np.isfinite(hessian[i, usable])):
            usable[i] = False
    keep = np.flatnonzero(usable)
    if keep.size:
        try:
            covariance = np.linalg.inv(hessian[np.ix_(keep, keep)])
        except np.linalg.LinAlgError:
            covariance = None
        if covariance is not None:
            variances = np.diag(covariance)
            positive = np.isfinite(variances) & (variances > 0)
            stderr[keep[positive]] = np.sqrt(variances[positive])

    if np.isnan(stderr).any():
        logger.warning("standard errors unavailable for %d of %d parameters", int(np.isnan(stderr).sum()), p)
    return stderr


def aic(max_loglik: float, k: int) -> float:
    if k < 0:
        raise DomainError(f"parameter count must be >= 0, got {k}")
    return 2.0 * k - 2.0 * max_loglik


def lr_test(loglik_restricted: float, loglik_full: float, dof: int) -> tuple[float, float]:
    if dof < 1:
        raise DomainError(f"likelihood-ratio test needs dof >= 1, got {dof}")
    statistic = max(2.0 * (loglik_full - loglik_restricted), 0.0)
    return statistic, chi2_sf(statistic, dof)


def reconstruction_error(beta_path, rho_path, window: int) -> float:
    """
    Sup-norm distance between the filtered coefficient (k = 1..N) and the rolling
    autocorrelation (k = w..N) over their common range; undefined windows are skipped.
    """
    beta = np.asarray(beta_path, dtype=float).reshape(-1)
    rho = np.asarray(rho_path, dtype=float).reshape(-1)
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    overlap = min(rho.size, beta.size - (window - 1))
    if overlap <= 0:
        raise DomainError("the coefficient path and the rolling path do not overlap")
    differences = np.abs(rho[:overlap] - beta[window - 1:window - 1 + overlap])
    differences = differences[np.isfinite(differences)]
    if differences.size == 0:
        raise DomainError("no defined rolling values in the overlap")
    return float(differences.max())


def _restricted_side(a: FitSummary, b: FitSummary) -> str | None:
    if (a.model, b.model) in NESTED_KINDS:
        return "a"
    if (b.model, a.model) in NESTED_KINDS:
        return "b"
    if a.model == b.model:
        if set(a.names) < set(b.names):
            return "a"
        if set(b.names) < set(a.names):
            return "b"
    return None


def compare_models(a: FitSummary, b: FitSummary, alpha: float) -> ModelComparison:
    """AIC ranking of two fits, plus a likelihood-ratio test when one nests the other."""
    aic_a, aic_b = aic(a.max_loglik, a.k), aic(b.max_loglik, b.k)
    if abs(aic_a - aic_b) <= 1e-9:
        preferred = "tie"
    else:
        preferred = "a" if aic_a < aic_b else "b"
    base = {
        "model_a": a.model.value,
        "model_b": b.model.value,
        "aic_a": aic_a,
        "aic_b": aic_b,
        "preferred": preferred,
    }

    side = _restricted_side(a, b)
    if side is None:
        return ModelComparison(**base, note="models are not nested; likelihood-ratio test omitted")
    restricted, full = (a, b) if side == "a" else (b, a)
    dof = full.k - restricted.k
    if dof < 1:
        return ModelComparison(**base, note="nested pair has no extra parameters; likelihood-ratio test omitted")

    statistic, pvalue = lr_test(restricted.max_loglik, full.max_loglik, dof)
    level = f"{alpha * 100:g}%"
    decision = f"H0 rejected at {level}" if pvalue < alpha else f"H0 not rejected at {level}"
    return ModelComparison(
        **base,
        restricted=side,
        dof=dof,
        lr_statistic=statistic,
        lr_pvalue=pvalue,
        decision=decision,
    )
