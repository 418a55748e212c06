"""Noise schedules and shift-coefficient schedules.

Every timestep-indexed array is stored with length ``T + 1`` so that index
``t`` means timestep ``t``.  Index 0 holds the identity values
(``beta[0] = 0``, ``alpha[0] = alpha_bar[0] = 1``, ``k[0] = 0``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Invalid configuration value; the message names the offending field."""


class ShiftMode(str, enum.Enum):
    NONE = "none"
    PRIOR_SHIFT = "prior_shift"
    DATA_NORMALIZATION = "data_normalization"
    QUADRATIC_SHIFT = "quadratic_shift"
    LINEAR = "linear"
    SQUARE = "square"
    SINE = "sine"
    PIECEWISE = "piecewise"

    @classmethod
    def parse(cls, value: "str | ShiftMode") -> "ShiftMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"priorshift": "prior_shift", "datanormalization": "data_normalization",
                   "quadraticshift": "quadratic_shift", "ddpm": "none"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigurationError(f"shift.mode: unknown shift mode {value!r}") from None


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def check_t(self, t: int, lo: int = 0) -> int:
        t = int(t)
        if not lo <= t <= self.T:
            raise IndexError(f"timestep {t} outside [{lo}, {self.T}]")
        return t

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.beta, other.beta)

    __hash__ = object.__hash__


def adm_linear_betas(T: int) -> tuple[float, float]:
    """Linear endpoints rescaled by ``1000 / T`` so short chains still mix fully."""
    scale = 1000.0 / T
    return 1e-4 * scale, 0.02 * scale


def build_noise_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if int(T) != T or T < 1:
        raise ConfigurationError(f"schedule.T: must be a positive integer, got {T!r}")
    T = int(T)
    if not 0.0 < beta_start < 1.0:
        raise ConfigurationError(f"schedule.beta_start: must lie in (0, 1), got {beta_start!r}")
    if not 0.0 < beta_end < 1.0:
        raise ConfigurationError(f"schedule.beta_end: must lie in (0, 1), got {beta_end!r}")
    if beta_start > beta_end:
        raise ConfigurationError(
            f"schedule.beta_start: {beta_start!r} exceeds schedule.beta_end {beta_end!r}")
    beta = np.zeros(T + 1)
    if T == 1:
        beta[1] = beta_start
    else:
        steps = np.arange(T) / (T - 1)
        beta[1:] = beta_start + steps * (beta_end - beta_start)
    return schedule_from_betas(beta[1:])


def schedule_from_betas(betas) -> NoiseSchedule:
    """Build a schedule from ``T`` explicit betas (for t = 1..T)."""
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size < 1:
        raise ConfigurationError("schedule.beta: need a non-empty 1-D array")
    if np.any(betas <= 0) or np.any(betas >= 1):
        raise ConfigurationError("schedule.beta: every beta must lie in (0, 1)")
    T = betas.size
    beta = np.concatenate([[0.0], betas])
    alpha = 1.0 - beta
    alpha_bar = np.empty(T + 1)
    alpha_bar[0] = 1.0
    for t in range(1, T + 1):
        alpha_bar[t] = alpha[t] * alpha_bar[t - 1]
    for arr in (beta, alpha, alpha_bar):
        arr.setflags(write=False)
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def _k_formula(mode: ShiftMode, alpha_bar: float, t: int, T: int) -> float:
    if t == 0:
        return 0.0
    root = math.sqrt(alpha_bar)
    if mode is ShiftMode.NONE:
        return 0.0
    if mode is ShiftMode.PRIOR_SHIFT:
        return 1.0 - root
    if mode is ShiftMode.DATA_NORMALIZATION:
        return -root
    if mode is ShiftMode.QUADRATIC_SHIFT:
        return root * (1.0 - root)
    if mode is ShiftMode.LINEAR:
        return t / T
    if mode is ShiftMode.SQUARE:
        return (t / T) ** 2
    if mode is ShiftMode.SINE:
        # 1 - cos form: runs 0 -> 1 like the other Prior-Shift schedules
        return 1.0 - math.cos(t * math.pi / (2 * T))
    if mode is ShiftMode.PIECEWISE:
        return 0.0 if t < 0.4 * T else (t - 0.4 * T) / (0.6 * T)
    raise ConfigurationError(f"shift.mode: unsupported mode {mode!r}")


def shift_coefficient(mode, schedule: NoiseSchedule, t: int) -> float:
    """k_t for ``mode``; always 0 at t = 0."""
    t = schedule.check_t(t)
    return _k_formula(ShiftMode.parse(mode), float(schedule.alpha_bar[t]), t, schedule.T)


@dataclass(frozen=True, eq=False)
class ShiftSchedule:
    mode: ShiftMode
    k: np.ndarray

    @property
    def T(self) -> int:
        return self.k.size - 1

    def shift(self, t: int, vector) -> np.ndarray:
        """Cumulative shift s_t = k_t * E(c)."""
        return self.k[t] * np.asarray(vector, dtype=np.float64)


def build_shift_schedule(mode, schedule: NoiseSchedule) -> ShiftSchedule:
    mode = ShiftMode.parse(mode)
    k = np.array([shift_coefficient(mode, schedule, t) for t in range(schedule.T + 1)])
    k.setflags(write=False)
    return ShiftSchedule(mode=mode, k=k)


def amendment_term(shift: ShiftSchedule, schedule: NoiseSchedule, t: int, shift_vector) -> np.ndarray:
    """d_t = (-k_t / sqrt(alpha_t) + k_{t-1}) * E(c), the per-step reverse-mean correction."""
    t = schedule.check_t(t, lo=1)
    coef = -shift.k[t] / math.sqrt(schedule.alpha[t]) + shift.k[t - 1]
    return coef * np.asarray(shift_vector, dtype=np.float64)
