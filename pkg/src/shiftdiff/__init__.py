"""Shifted-trajectory conditional diffusion models at desk scale."""

from .diffusion import (ContractError, GaussianParams, ddim_sigma, ddim_step, forward_kernel,
                        forward_marginal, g_target, posterior_mean_from_eps, posterior_params,
                        reverse_step_params, sample_forward, x0_from_g)
from .oracle import GmmSpec, OracleDenoiser, default_gmm, gmm_sample, oracle_g, oracle_posterior_x0
from .schedules import (ConfigurationError, NoiseSchedule, ShiftMode, ShiftSchedule, amendment_term,
                        build_noise_schedule, build_shift_schedule, shift_coefficient)
from .shift_predictor import PredictorKind, ShiftPredictor, interpolate_shift, predict_shift

__all__ = [
    "ConfigurationError", "ContractError", "GaussianParams", "GmmSpec", "NoiseSchedule", "OracleDenoiser",
    "PredictorKind", "ShiftMode", "ShiftPredictor", "ShiftSchedule", "amendment_term",
    "build_noise_schedule", "build_shift_schedule", "ddim_sigma", "ddim_step", "default_gmm",
    "forward_kernel", "forward_marginal", "g_target", "gmm_sample", "interpolate_shift", "oracle_g",
    "oracle_posterior_x0", "posterior_mean_from_eps", "posterior_params", "predict_shift",
    "reverse_step_params", "sample_forward", "shift_coefficient", "x0_from_g",
]
