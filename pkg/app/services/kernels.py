"""
Compiled likelihood loops for the built-in models.

Each kernel runs the same predict/update recursion as ``run_filter`` for one model
family, written out on scalars, and returns ``(loglik, failed_step)`` where
``failed_step`` is the index of the observation at which the run diverged or
``NO_FAILURE``. Nothing per step is kept; ``run_filter`` stays the reference path
and the source of filtered paths.
"""
import math

from numba import njit

NO_FAILURE = -1


@njit(cache=True)
def random_walk_ar1_loglik(y, mean0, cov0, mu, sigma_w2, sigma_eps2, obs_noise):
    """
    State ``[beta1, y]`` with drift ``[beta1 + mu, (beta1 + mu) y]`` and H = [0, 1].
    ``y`` holds the observations after the initial one.
    """
    beta = mean0[0]
    level = mean0[1]
    p11 = cov0[0, 0]
    p12 = 0.5 * (cov0[0, 1] + cov0[1, 0])
    p22 = cov0[1, 1]
    total = 0.0
    for k in range(y.size):
        slope = beta + mu
        level_pred = slope * level
        row = level * p11 + slope * p12
        q11 = p11 + sigma_w2
        q12 = row + level * sigma_w2
        q22 = level * row + slope * (level * p12 + slope * p22) + level * level * sigma_w2 + sigma_eps2

        s = q22 + obs_noise
        if not (math.isfinite(s) and s > 0.0):
            return total, k
        e = y[k] - level_pred
        beta = slope + q12 * e / s
        level = level_pred + q22 * e / s
        p11 = q11 - q12 * q12 / s
        p12 = q12 - q12 * q22 / s
        p22 = q22 - q22 * q22 / s
        total += -0.5 * math.log(s) - 0.5 * e * e / s
        if not (
            math.isfinite(beta) and math.isfinite(level) and math.isfinite(p11)
            and math.isfinite(p12) and math.isfinite(p22) and math.isfinite(total)
        ):
            return total, k
    return total, NO_FAILURE


@njit(cache=True)
def garch_ar1_loglik(y, mean0, cov0, omega, persistence, sigma_w2, obs_noise, floor, tolerance):
    """
    State ``[beta1, y, sigma2]``; the noise scale on y is ``sqrt(omega + persistence *
    max(sigma2, floor))`` and a filtered ``sigma2 < -tolerance`` is a divergence.
    """
    beta = mean0[0]
    level = mean0[1]
    var = mean0[2]
    p11 = cov0[0, 0]
    p12 = 0.5 * (cov0[0, 1] + cov0[1, 0])
    p13 = 0.5 * (cov0[0, 2] + cov0[2, 0])
    p22 = cov0[1, 1]
    p23 = 0.5 * (cov0[1, 2] + cov0[2, 1])
    p33 = cov0[2, 2]
    total = 0.0
    for k in range(y.size):
        if not math.isfinite(var) or var < -tolerance:
            return total, k
        scale2 = omega + persistence * max(var, floor)
        level_pred = beta * level
        var_pred = omega + persistence * var

        row = level * p11 + beta * p12
        q11 = p11 + sigma_w2
        q12 = row + level * sigma_w2
        q13 = persistence * p13
        q22 = level * row + beta * (level * p12 + beta * p22) + level * level * sigma_w2 + scale2
        q23 = persistence * (level * p13 + beta * p23)
        q33 = persistence * persistence * p33

        s = q22 + obs_noise
        if not (math.isfinite(s) and s > 0.0):
            return total, k
        e = y[k] - level_pred
        beta = beta + q12 * e / s
        level = level_pred + q22 * e / s
        var = var_pred + q23 * e / s
        p11 = q11 - q12 * q12 / s
        p12 = q12 - q12 * q22 / s
        p13 = q13 - q12 * q23 / s
        p22 = q22 - q22 * q22 / s
        p23 = q23 - q22 * q23 / s
        p33 = q33 - q23 * q23 / s
        total += -0.5 * math.log(s) - 0.5 * e * e / s
        if not (
            math.isfinite(beta) and math.isfinite(level) and math.isfinite(var)
            and math.isfinite(p11) and math.isfinite(p22) and math.isfinite(p33)
            and math.isfinite(p12) and math.isfinite(p13) and math.isfinite(p23)
            and math.isfinite(total)
        ):
            return total, k
    return total, NO_FAILURE


@njit(cache=True)
def regression_ar1_loglik(y, beta0, var0, mu, sigma_w2, r0, omega, a1, b1):
    """
    Scalar coefficient observed through ``y[k] = y[k-1] beta1 + eps``. R starts at
    ``r0`` and follows ``omega + a1 e^2 + b1 R`` after each update, so a constant
    R is ``omega = r0, a1 = b1 = 0``. ``y`` is the full series.
    """
    beta = beta0
    p = var0
    r = r0
    total = 0.0
    for k in range(1, y.size):
        h = y[k - 1]
        beta_pred = beta + mu
        p_pred = p + sigma_w2
        s = h * h * p_pred + r
        if not (math.isfinite(s) and s > 0.0):
            return total, k - 1
        e = y[k] - h * beta_pred
        ph = p_pred * h
        beta = beta_pred + ph * e / s
        p = p_pred - ph * ph / s
        total += -0.5 * math.log(s) - 0.5 * e * e / s
        if not (math.isfinite(beta) and math.isfinite(p) and math.isfinite(total)):
            return total, k - 1
        r = omega + a1 * e * e + b1 * r
    return total, NO_FAILURE
