"""Ancestral, implicit (DDIM), mixed critical-stage and shift-interpolated samplers.

A model is any callable ``model(x_t, t, condition) -> g`` with a boolean
``conditional`` attribute; unconditional models are always called with
``condition=None``.  Noise is drawn from the supplied generator in a fixed
order: the ``x_T`` draw first, then one draw per stochastic step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diffusion import ContractError, ddim_sigma, ddim_step, posterior_variance, reverse_mean
from .evaluation import conditional_accuracy
from .oracle import GmmSpec
from .schedules import NoiseSchedule, ShiftMode, ShiftSchedule, build_shift_schedule
from .shift_predictor import ShiftPredictor, interpolate_shift


@dataclass(frozen=True)
class CriticalWindow:
    """Conditional model is active for t in (t1, t2]."""

    t1: int
    t2: int

    def __post_init__(self):
        if self.t1 < 0 or self.t2 < self.t1:
            raise ContractError(f"invalid window ({self.t1}, {self.t2}]")

    @property
    def width(self) -> int:
        return self.t2 - self.t1

    def contains(self, t: int) -> bool:
        return self.t1 < t <= self.t2


def _data_dim(model) -> int:
    dim = getattr(model, "data_dim", None)
    if dim is None:
        dim = model.gmm.dim
    return dim


def _call(model, x, t, cond):
    return model(x, t, cond if getattr(model, "conditional", False) else None)


def _noise(rng, shape, sigma_diag):
    z = rng.standard_normal(shape)
    return z if sigma_diag is None else z * np.sqrt(sigma_diag)


def _ancestral(pick_model: Callable[[int], object], schedule: NoiseSchedule, shift: ShiftSchedule,
               e: np.ndarray, cond, rng, sigma_diag=None, trace=None) -> np.ndarray:
    k = shift.k
    x = k[schedule.T] * e + _noise(rng, e.shape, sigma_diag)
    if trace is not None:
        trace.append((schedule.T, x.copy()))
    for t in range(schedule.T, 0, -1):
        g = _call(pick_model(t), x, t, cond)
        x_new = reverse_mean(schedule, k[t] * e, k[t - 1] * e, x, g, t)
        if t > 1:
            x_new = x_new + math.sqrt(posterior_variance(schedule, t)) * _noise(rng, e.shape, sigma_diag)
        x = x_new
        if trace is not None:
            trace.append((t - 1, x.copy()))
    return x


def _shift_vectors(predictor: ShiftPredictor | None, condition, count: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    cond = np.full(count, condition, dtype=np.int64)
    if predictor is None:
        return np.zeros((count, dim)), cond
    return np.broadcast_to(predictor(cond), (count, dim)).copy(), cond


def sample_ancestral(model, predictor: ShiftPredictor | None, shift: ShiftSchedule, schedule: NoiseSchedule,
                     condition: int, count: int, rng: np.random.Generator, sigma_diag=None,
                     trace: list | None = None) -> np.ndarray:
    """Start at x_T ~ N(s_T, Sigma), then step t = T..1 with no noise at the last step."""
    e, cond = _shift_vectors(predictor, condition, count, _data_dim(model))
    return _ancestral(lambda t: model, schedule, shift, e, cond, rng, sigma_diag, trace)


def ddim_subsequence(T: int, steps: int) -> list[int]:
    """``steps`` evenly spaced timesteps ending at T."""
    if not 1 <= steps <= T:
        raise ContractError(f"need 1 <= steps <= T, got {steps}")
    return sorted({int(round(v)) for v in np.linspace(T / steps, T, steps)})


def sample_ddim(model, predictor: ShiftPredictor | None, shift: ShiftSchedule, schedule: NoiseSchedule,
                condition: int, tau, eta: float, count: int, rng: np.random.Generator,
                sigma_diag=None) -> np.ndarray:
    tau = [int(v) for v in tau]
    if not tau or any(b <= a for a, b in zip(tau, tau[1:])) or tau[0] < 1 or tau[-1] > schedule.T:
        raise ContractError(f"tau must be strictly increasing within [1, {schedule.T}]")
    e, cond = _shift_vectors(predictor, condition, count, _data_dim(model))
    k = shift.k
    x = k[tau[-1]] * e + _noise(rng, e.shape, sigma_diag)
    for i in range(len(tau) - 1, -1, -1):
        t = tau[i]
        t_prev = tau[i - 1] if i > 0 else 0
        sigma = ddim_sigma(schedule, t_prev, t, eta)
        g = _call(model, x, t, cond)
        noise = _noise(rng, e.shape, sigma_diag) if sigma > 0 else None
        x = ddim_step(schedule, k[t] * e, k[t_prev] * e, x, g, t, t_prev, sigma, noise)
    return x


def _check_mixed(uncond_model, cond_model, schedule: NoiseSchedule) -> None:
    for m in (uncond_model, cond_model):
        sched = getattr(m, "schedule", None)
        if sched is not None and sched != schedule:
            raise ContractError("mixed sampling needs both models on the same noise schedule")
        mode = getattr(getattr(m, "shift", None), "mode", ShiftMode.NONE)
        if mode is not ShiftMode.NONE:
            raise ContractError("mixed sampling needs models trained on the unshifted forward process")


def sample_mixed(uncond_model, cond_model, schedule: NoiseSchedule, condition: int, window: CriticalWindow,
                 count: int, rng: np.random.Generator, sigma_diag=None, trace=None) -> np.ndarray:
    """Unconditional ancestral sampling that hands over to ``cond_model`` inside ``window``."""
    _check_mixed(uncond_model, cond_model, schedule)
    if window.t2 > schedule.T:
        raise ContractError(f"window ({window.t1}, {window.t2}] exceeds T = {schedule.T}")
    shift = build_shift_schedule(ShiftMode.NONE, schedule)
    e, cond = _shift_vectors(None, condition, count, _data_dim(uncond_model))
    pick = lambda t: cond_model if window.contains(t) else uncond_model  # noqa: E731
    return _ancestral(pick, schedule, shift, e, cond, rng, sigma_diag, trace)


def mixed_accuracy(uncond_model, cond_model, schedule: NoiseSchedule, gmm: GmmSpec, window: CriticalWindow,
                   count: int, seed: int) -> float:
    """Mean conditional accuracy over all classes, same noise for every window."""
    accs = []
    for c in range(gmm.num_classes):
        rng = np.random.default_rng([seed, c])
        x = sample_mixed(uncond_model, cond_model, schedule, c, window, count, rng)
        accs.append(conditional_accuracy(x, gmm, c))
    return float(np.mean(accs))


def grid_search_window(uncond_model, cond_model, schedule: NoiseSchedule, gmm: GmmSpec, stride: int,
                       accuracy_threshold: float, count: int = 500, seed: int = 0) -> CriticalWindow | None:
    """Shortest window on the stride grid reaching the threshold; ties go to the smaller t1.

    Returns ``None`` when no window qualifies.
    """
    _check_mixed(uncond_model, cond_model, schedule)
    grid = list(range(0, schedule.T + 1, stride))
    if grid[-1] != schedule.T:
        grid.append(schedule.T)
    candidates = sorted(((b - a, a, b) for i, a in enumerate(grid) for b in grid[i:]))
    for _, a, b in candidates:
        window = CriticalWindow(a, b)
        if mixed_accuracy(uncond_model, cond_model, schedule, gmm, window, count, seed) >= accuracy_threshold:
            return window
    return None


def sample_interpolated(model, predictor: ShiftPredictor, shift: ShiftSchedule, schedule: NoiseSchedule,
                        c1: int, c2: int, lam: float, count: int, rng: np.random.Generator,
                        sigma_diag=None) -> np.ndarray:
    """Ancestral sampling along the trajectory with shift k_t (lam E(c1) + (1 - lam) E(c2))."""
    if getattr(model, "conditional", False):
        raise ContractError("interpolation needs a model that takes no condition input")
    e_hat = interpolate_shift(predictor, np.array([c1]), np.array([c2]), lam)
    e = np.broadcast_to(e_hat, (count, predictor.data_dim)).copy()
    return _ancestral(lambda t: model, schedule, shift, e, None, rng, sigma_diag)
