"""
Discrete-time extended Kalman filter in covariance form.

The engine is model-agnostic: everything it needs about the dynamics comes from a
``ModelDefinition``. Measurements are linear (``z = H x + v``), the drift may be
nonlinear and the process noise may enter non-additively through ``G_k``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from app.errors import ConfigurationError, NumericalDivergenceError

logger = logging.getLogger(__name__)

Vector = np.ndarray
Matrix = np.ndarray


def _as_matrix(value, rows: int, cols: int, name: str) -> Matrix:
    matrix = np.atleast_2d(np.asarray(value, dtype=float))
    if matrix.shape != (rows, cols):
        raise ConfigurationError(f"{name} has shape {matrix.shape}, expected {(rows, cols)}")
    return matrix


def symmetrize(matrix: Matrix) -> Matrix:
    return 0.5 * (matrix + matrix.T)


def is_valid_covariance(matrix: Matrix, tol: float = 1e-10) -> bool:
    """Symmetric within ``tol`` (relative) and PSD up to ``-tol * trace``."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        return False
    scale = max(float(np.max(np.abs(matrix))), 1.0)
    if np.max(np.abs(matrix - matrix.T)) > tol * scale:
        return False
    eigenvalues = np.linalg.eigvalsh(symmetrize(matrix))
    return bool(eigenvalues.min() >= -tol * max(abs(float(np.trace(matrix))), 1.0))


@dataclass(frozen=True)
class StateEstimate:
    mean: Vector
    covariance: Matrix
    time_index: int = 0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", _as_matrix(self.covariance, mean.size, mean.size, "covariance"))

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_valid(self, tol: float = 1e-10) -> bool:
        return is_valid_covariance(self.covariance, tol)


@dataclass(frozen=True)
class ModelDefinition:
    """
    Nonlinear state-space model ``x_{k+1} = f(x_k, u_{k+1})``, ``z_k = H x_k + v_k``.

    ``drift`` is f evaluated at zero noise; the two Jacobians are taken at the
    filtered mean. ``transition`` (optional) is the full noisy map, used by the
    simulators and by Jacobian checks. ``obs_matrix_at`` lets H vary per step,
    otherwise the constant ``obs_matrix`` applies. ``floor_check`` flags states the
    model will clamp (counted per run). ``obs_noise_recursion`` maps the current R
    and the latest residual to the R of the next update; without it R is constant.
    """
    state_dim: int
    noise_dim: int
    obs_dim: int
    drift: Callable[[Vector, int], Vector]
    drift_jacobian_state: Callable[[Vector, int], Matrix]
    drift_jacobian_noise: Callable[[Vector, int], Matrix]
    process_noise_cov: Matrix
    obs_matrix: Matrix
    obs_noise_cov: Matrix
    transition: Callable[[Vector, Vector, int], Vector] | None = None
    obs_matrix_at: Callable[[int], Matrix] | None = None
    floor_check: Callable[[Vector], bool] | None = None
    obs_noise_recursion: Callable[[Matrix, Vector], Matrix] | None = None
    kind: str = "custom"

    def __post_init__(self):
        n, q, m = self.state_dim, self.noise_dim, self.obs_dim
        if min(n, q, m) < 1:
            raise ConfigurationError("model dimensions must be positive")
        Q = _as_matrix(self.process_noise_cov, q, q, "process_noise_cov")
        H = _as_matrix(self.obs_matrix, m, n, "obs_matrix")
        R = _as_matrix(self.obs_noise_cov, m, m, "obs_noise_cov")
        if not is_valid_covariance(Q):
            raise ConfigurationError("process noise covariance must be symmetric PSD")
        if not is_valid_covariance(R) or np.linalg.eigvalsh(symmetrize(R)).min() <= 0:
            raise ConfigurationError("observation noise covariance must be positive definite")
        object.__setattr__(self, "process_noise_cov", Q)
        object.__setattr__(self, "obs_matrix", H)
        object.__setattr__(self, "obs_noise_cov", R)

    def observation_matrix(self, time_index: int) -> Matrix:
        if self.obs_matrix_at is None:
            return self.obs_matrix
        return _as_matrix(self.obs_matrix_at(time_index), self.obs_dim, self.state_dim, "obs_matrix_at")


@dataclass(frozen=True)
class Innovation:
    residual: Vector
    variance: Matrix
    loglik_increment: float


@dataclass(frozen=True)
class FilterStep:
    predicted: StateEstimate
    filtered: StateEstimate
    innovation: Innovation


@dataclass(frozen=True)
class FilterRun:
    initial: StateEstimate
    steps: tuple[FilterStep, ...] = field(default_factory=tuple)
    total_loglik: float = 0.0
    floor_hits: int = 0

    def __len__(self) -> int:
        return len(self.steps)

    def filtered_means(self) -> Matrix:
        if not self.steps:
            return np.empty((0, self.initial.dim))
        return np.vstack([s.filtered.mean for s in self.steps])

    def predicted_means(self) -> Matrix:
        if not self.steps:
            return np.empty((0, self.initial.dim))
        return np.vstack([s.predicted.mean for s in self.steps])

    def residuals(self) -> Matrix:
        return np.array([s.innovation.residual for s in self.steps])

    def innovation_variances(self) -> np.ndarray:
        return np.array([s.innovation.variance for s in self.steps])

    def loglik_increments(self) -> np.ndarray:
        return np.array([s.innovation.loglik_increment for s in self.steps], dtype=float)

    def state_path(self, index: int) -> np.ndarray:
        """Coordinate ``index`` of the initial mean followed by every filtered mean."""
        values = [self.initial.mean[index]]
        values.extend(s.filtered.mean[index] for s in self.steps)
        return np.asarray(values, dtype=float)

    def variance_path(self, index: int) -> np.ndarray:
        values = [self.initial.covariance[index, index]]
        values.extend(s.filtered.covariance[index, index] for s in self.steps)
        return np.asarray(values, dtype=float)


def _check_state(model: ModelDefinition, estimate: StateEstimate) -> None:
    if estimate.dim != model.state_dim:
        raise ConfigurationError(
            f"state has dimension {estimate.dim}, model expects {model.state_dim}"
        )


def _observation(model: ModelDefinition, observation) -> Vector:
    z = np.atleast_1d(np.asarray(observation, dtype=float)).reshape(-1)
    if z.size != model.obs_dim:
        raise ConfigurationError(f"observation has {z.size} entries, model expects {model.obs_dim}")
    return z


def _predict(model: ModelDefinition, filtered: StateEstimate) -> StateEstimate:
    x, P, k = filtered.mean, filtered.covariance, filtered.time_index

    mean = np.asarray(model.drift(x, k), dtype=float).reshape(-1)
    if mean.size != model.state_dim:
        raise ConfigurationError(f"drift returned {mean.size} entries, expected {model.state_dim}")
    if not np.all(np.isfinite(mean)):
        raise NumericalDivergenceError("non-finite drift output")

    F = _as_matrix(model.drift_jacobian_state(x, k), model.state_dim, model.state_dim, "F")
    G = _as_matrix(model.drift_jacobian_noise(x, k), model.state_dim, model.noise_dim, "G")
    covariance = symmetrize(F @ P @ F.T + G @ model.process_noise_cov @ G.T)
    if not np.all(np.isfinite(covariance)):
        raise NumericalDivergenceError("non-finite predicted covariance")
    return StateEstimate(mean, covariance, k + 1)


def _update(
    model: ModelDefinition, predicted: StateEstimate, z: Vector, R: Matrix
) -> tuple[StateEstimate, Innovation]:
    x, P = predicted.mean, predicted.covariance
    H = model.observation_matrix(predicted.time_index)

    if model.obs_dim == 1:
        # Scalar innovation: R_e^{-1} and log R_e in closed form.
        h = H[0]
        Ph = P @ h
        s = float(h @ Ph) + float(R[0, 0])
        if not (math.isfinite(s) and s > 0):
            raise NumericalDivergenceError("innovation variance is not positive")
        e = float(z[0] - h @ x)
        mean = x + Ph * (e / s)
        covariance = symmetrize(P - np.outer(Ph, Ph) / s)
        increment = -0.5 * math.log(s) - 0.5 * e * e / s
        residual, variance = np.array([e]), np.array([[s]])
    else:
        residual = z - H @ x
        variance = symmetrize(H @ P @ H.T + R)
        sign, logdet = np.linalg.slogdet(variance)
        if sign <= 0 or not np.isfinite(logdet):
            raise NumericalDivergenceError("innovation covariance is not positive definite")
        try:
            variance_inv = np.linalg.inv(variance)
        except np.linalg.LinAlgError as err:
            raise NumericalDivergenceError("innovation covariance is singular") from err
        gain = P @ H.T @ variance_inv
        mean = x + gain @ residual
        covariance = symmetrize((np.eye(model.state_dim) - gain @ H) @ P)
        increment = -0.5 * logdet - 0.5 * float(residual @ variance_inv @ residual)

    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(covariance)) and math.isfinite(increment)):
        raise NumericalDivergenceError("non-finite filtered estimate")
    filtered = StateEstimate(mean, covariance, predicted.time_index)
    return filtered, Innovation(residual, variance, increment)


def ekf_predict(model: ModelDefinition, filtered: StateEstimate) -> StateEstimate:
    """Time update: propagate the mean through the drift and the covariance through F and G."""
    _check_state(model, filtered)
    return _predict(model, filtered)


def ekf_update(
    model: ModelDefinition, predicted: StateEstimate, observation, obs_noise_cov=None
) -> tuple[StateEstimate, Innovation]:
    """
    Measurement update. The log-likelihood increment drops the 2*pi constant.
    ``obs_noise_cov`` overrides the model's R for this update only.
    """
    _check_state(model, predicted)
    z = _observation(model, observation)
    R = model.obs_noise_cov
    if obs_noise_cov is not None:
        R = _as_matrix(obs_noise_cov, model.obs_dim, model.obs_dim, "obs_noise_cov")
    return _update(model, predicted, z, R)


def run_filter(
    model: ModelDefinition, observations: Sequence, init: StateEstimate
) -> FilterRun:
    """
    Alternate predict and update over ``observations`` starting from ``init``.

    Shapes are checked once up front. Divergence anywhere aborts the run; the raised
    error carries the index of the failing observation.
    """
    _check_state(model, init)
    data = [_observation(model, observation) for observation in observations]
    steps = []
    floor_hits = 0
    current = init
    R = model.obs_noise_cov
    for step, z in enumerate(data):
        try:
            if model.floor_check is not None and model.floor_check(current.mean):
                floor_hits += 1
            predicted = _predict(model, current)
            current, innovation = _update(model, predicted, z, R)
            if model.obs_noise_recursion is not None:
                R = _as_matrix(
                    model.obs_noise_recursion(R, innovation.residual), model.obs_dim, model.obs_dim, "R"
                )
        except NumericalDivergenceError as err:
            raise err.at_step(step) from err
        steps.append(FilterStep(predicted, current, innovation))

    if floor_hits:
        logger.warning("variance floor applied at %d of %d steps", floor_hits, len(steps))
    total = math.fsum(s.innovation.loglik_increment for s in steps)
    return FilterRun(initial=init, steps=tuple(steps), total_loglik=total, floor_hits=floor_hits)
