"""Closed-form Gaussian algebra of the shifted forward and reverse processes.

All functions are pure.  Vectors broadcast over leading batch axes, shifts
``s_t`` are passed as arrays already scaled by ``k_t``, and the covariance is
``var_scale * diag(sigma_diag)``.  Noise is always supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .schedules import NoiseSchedule


class ContractError(ValueError):
    """An operation was called outside its precondition."""


@dataclass
class GaussianParams:
    mean: np.ndarray
    var_scale: float
    sigma_diag: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        if not self.var_scale > 0:
            raise ContractError(f"var_scale must be positive, got {self.var_scale}")
        if self.sigma_diag is None:
            self.sigma_diag = np.ones(self.mean.shape[-1] if self.mean.ndim else 1)
        self.sigma_diag = np.asarray(self.sigma_diag, dtype=np.float64)
        if np.any(self.sigma_diag <= 0):
            raise ContractError("sigma_diag entries must be positive")

    @property
    def variance(self) -> np.ndarray:
        """Per-coordinate variance."""
        return self.var_scale * self.sigma_diag


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _same_shape(*arrays):
    try:
        np.broadcast_shapes(*(np.shape(a) for a in arrays))
    except ValueError as err:
        raise ValueError(f"shape mismatch: {[np.shape(a) for a in arrays]}") from err


def forward_marginal(schedule: NoiseSchedule, s_t, x0, t: int, sigma_diag=None) -> GaussianParams:
    t = schedule.check_t(t, lo=1)
    s_t, x0 = _vec(s_t), _vec(x0)
    _same_shape(s_t, x0)
    ab = schedule.alpha_bar[t]
    return GaussianParams(math.sqrt(ab) * x0 + s_t, 1.0 - ab, sigma_diag)


def sample_forward(schedule: NoiseSchedule, s_t, x0, t: int, noise) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + s_t + sqrt(1 - abar_t) noise, with noise ~ N(0, Sigma)."""
    t = schedule.check_t(t)
    s_t, x0, noise = _vec(s_t), _vec(x0), _vec(noise)
    _same_shape(s_t, x0, noise)
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * x0 + s_t + math.sqrt(1.0 - ab) * noise


def g_target(schedule: NoiseSchedule, x_t, x0, t: int) -> np.ndarray:
    """Regression target (x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t)."""
    t = schedule.check_t(t, lo=1)
    ab = schedule.alpha_bar[t]
    return (_vec(x_t) - math.sqrt(ab) * _vec(x0)) / math.sqrt(1.0 - ab)


def forward_kernel(schedule: NoiseSchedule, s_t, s_prev, x_prev, t: int, sigma_diag=None) -> GaussianParams:
    t = schedule.check_t(t, lo=1)
    s_t, s_prev, x_prev = _vec(s_t), _vec(s_prev), _vec(x_prev)
    _same_shape(s_t, s_prev, x_prev)
    ra = math.sqrt(schedule.alpha[t])
    return GaussianParams(ra * x_prev + s_t - ra * s_prev, schedule.beta[t], sigma_diag)


def posterior_variance(schedule: NoiseSchedule, t: int) -> float:
    ab, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    return (1.0 - ab_prev) * schedule.beta[t] / (1.0 - ab)


def posterior_coefficients(schedule: NoiseSchedule, t: int) -> tuple[float, float]:
    """Coefficients on x0 and x_t in the posterior mean (the x_t one also scales -s_t)."""
    ab, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    c0 = math.sqrt(ab_prev) * schedule.beta[t] / (1.0 - ab)
    ct = math.sqrt(schedule.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab)
    return c0, ct


def posterior_params(schedule: NoiseSchedule, s_t, s_prev, x_t, x0, t: int, sigma_diag=None) -> GaussianParams:
    """q(x_{t-1} | x_t, x0, c) for t >= 2."""
    t = schedule.check_t(t)
    if t < 2:
        raise ContractError("posterior_params needs t >= 2; t = 1 is the decoder term")
    s_t, s_prev, x_t, x0 = _vec(s_t), _vec(s_prev), _vec(x_t), _vec(x0)
    _same_shape(s_t, s_prev, x_t, x0)
    c0, ct = posterior_coefficients(schedule, t)
    mean = c0 * x0 + ct * x_t - ct * s_t + s_prev
    return GaussianParams(mean, posterior_variance(schedule, t), sigma_diag)


def posterior_mean_from_eps(schedule: NoiseSchedule, s_t, s_prev, x_t, eps, t: int) -> np.ndarray:
    t = schedule.check_t(t, lo=1)
    s_t, s_prev, x_t, eps = _vec(s_t), _vec(s_prev), _vec(x_t), _vec(eps)
    _same_shape(s_t, s_prev, x_t, eps)
    ra = math.sqrt(schedule.alpha[t])
    coef = schedule.beta[t] / math.sqrt(1.0 - schedule.alpha_bar[t])
    return (x_t - coef * eps) / ra - s_t / ra + s_prev


def x0_from_g(schedule: NoiseSchedule, x_t, g, t: int) -> np.ndarray:
    t = schedule.check_t(t)
    if t == 0:
        raise ContractError("x0_from_g is undefined at t = 0")
    ab = schedule.alpha_bar[t]
    return (_vec(x_t) - math.sqrt(1.0 - ab) * _vec(g)) / math.sqrt(ab)


def reverse_mean(schedule: NoiseSchedule, s_t, s_prev, x_t, g, t: int) -> np.ndarray:
    t = schedule.check_t(t, lo=1)
    s_t, s_prev, x_t, g = _vec(s_t), _vec(s_prev), _vec(x_t), _vec(g)
    _same_shape(s_t, s_prev, x_t, g)
    ra = math.sqrt(schedule.alpha[t])
    coef = schedule.beta[t] / math.sqrt(1.0 - schedule.alpha_bar[t])
    _, ct = posterior_coefficients(schedule, t)
    return (x_t - coef * g) / ra - ct * s_t + s_prev


def reverse_variance(schedule: NoiseSchedule, t: int) -> float:
    # t = 1 uses the decoder variance beta_1
    return schedule.beta[1] if t == 1 else posterior_variance(schedule, t)


def reverse_step_params(schedule: NoiseSchedule, s_t, s_prev, x_t, g, t: int, sigma_diag=None) -> GaussianParams:
    """p_theta(x_{t-1} | x_t, c) given the network output ``g``."""
    mean = reverse_mean(schedule, s_t, s_prev, x_t, g, t)
    return GaussianParams(mean, reverse_variance(schedule, t), sigma_diag)


def ddim_sigma(schedule: NoiseSchedule, tau_prev: int, tau_i: int, eta: float) -> float:
    if not tau_prev < tau_i:
        raise ContractError(f"need tau_prev < tau_i, got {tau_prev} >= {tau_i}")
    if eta < 0:
        raise ContractError(f"eta must be non-negative, got {eta}")
    if eta == 0:
        return 0.0
    ab_i = schedule.alpha_bar[schedule.check_t(tau_i, lo=1)]
    ab_p = schedule.alpha_bar[schedule.check_t(tau_prev)]
    return eta * math.sqrt((1.0 - ab_p) / (1.0 - ab_i)) * math.sqrt(1.0 - ab_i / ab_p)


def ddim_step(schedule: NoiseSchedule, s_t, s_prev, x_t, g, t: int, t_prev: int, sigma: float, noise) -> np.ndarray:
    """Jump from ``t`` to ``t_prev`` along the shifted implicit process.

    The consecutive-step update is generalized to sub-sequence jumps by
    replacing ``alpha_t`` with ``abar_t / abar_{t_prev}``.
    """
    t = schedule.check_t(t, lo=1)
    t_prev = schedule.check_t(t_prev)
    if not t_prev < t:
        raise ContractError(f"need t_prev < t, got {t_prev} >= {t}")
    ab, ab_p = schedule.alpha_bar[t], schedule.alpha_bar[t_prev]
    rest = 1.0 - ab_p - sigma * sigma
    if sigma < 0 or rest < -1e-15:
        raise ContractError(f"sigma^2 = {sigma * sigma} exceeds 1 - abar[t_prev] = {1.0 - ab_p}")
    s_t, s_prev, g = _vec(s_t), _vec(s_prev), _vec(g)
    x0_hat = x0_from_g(schedule, x_t, g, t)
    eps_hat = g - s_t / math.sqrt(1.0 - ab)
    out = math.sqrt(ab_p) * x0_hat + s_prev + math.sqrt(max(rest, 0.0)) * eps_hat
    if sigma > 0:
        out = out + sigma * _vec(noise)
    return out
