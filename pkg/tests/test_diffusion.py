import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftdiff.diffusion import (ContractError, GaussianParams, ddim_sigma, ddim_step, forward_kernel,
                                 forward_marginal, g_target, posterior_mean_from_eps, posterior_params,
                                 posterior_variance, reverse_mean, reverse_step_params, reverse_variance,
                                 sample_forward, x0_from_g)
from shiftdiff.schedules import ShiftMode, build_noise_schedule, build_shift_schedule, schedule_from_betas

MODES = list(ShiftMode)


def _setup(seed, T=40, d=3, mode="quadratic_shift"):
    rng = np.random.default_rng(seed)
    sched = build_noise_schedule(T, 1e-3, 0.2)
    shift = build_shift_schedule(mode, sched)
    return rng, sched, shift, rng.standard_normal(d), rng.standard_normal(d)


def test_marginal_example():
    sched = schedule_from_betas([0.75])  # abar_1 = 0.25
    p = forward_marginal(sched, [0.1], [2.0], 1)
    assert p.mean == pytest.approx([1.1])
    assert p.var_scale == pytest.approx(0.75)


def test_marginal_rejects_t0_and_shape_mismatch():
    sched = build_noise_schedule(5)
    with pytest.raises(IndexError):
        forward_marginal(sched, [0.0], [1.0], 0)
    with pytest.raises(ValueError, match="shape"):
        forward_marginal(sched, np.zeros(2), np.zeros(3), 1)


def test_gaussian_params_validation():
    with pytest.raises(ContractError):
        GaussianParams(np.zeros(2), 0.0)
    with pytest.raises(ContractError):
        GaussianParams(np.zeros(2), 1.0, np.array([1.0, -1.0]))
    np.testing.assert_array_equal(GaussianParams(np.zeros(2), 0.5, np.array([1.0, 4.0])).variance, [0.5, 2.0])


@pytest.mark.parametrize("mode", MODES)
def test_kernel_composition_matches_marginal(mode):
    _, sched, shift, x0, e = _setup(1, mode=mode)
    mean, var = x0.copy(), 0.0
    for t in range(1, sched.T + 1):
        kern = forward_kernel(sched, shift.k[t] * e, shift.k[t - 1] * e, mean, t)
        mean, var = kern.mean, sched.alpha[t] * var + kern.var_scale
        marg = forward_marginal(sched, shift.k[t] * e, x0, t)
        np.testing.assert_allclose(mean, marg.mean, rtol=0, atol=1e-12)
        assert var == pytest.approx(marg.var_scale, rel=1e-12)


def test_g_target_equals_shifted_noise():
    rng, sched, shift, x0, e = _setup(2)
    for t in (1, 7, 40):
        eps = rng.standard_normal(3)
        s_t = shift.k[t] * e
        x_t = sample_forward(sched, s_t, x0, t, eps)
        np.testing.assert_allclose(g_target(sched, x_t, x0, t), eps + s_t / math.sqrt(1 - sched.alpha_bar[t]),
                                   atol=1e-12)


def test_sample_forward_at_t0_is_x0():
    sched = build_noise_schedule(5)
    np.testing.assert_array_equal(sample_forward(sched, np.zeros(2), [1.0, 2.0], 0, [5.0, 5.0]), [1.0, 2.0])


def test_posterior_example_zero_shift():
    # beta=0.5 twice: abar=[1, 0.5, 0.25]
    sched = schedule_from_betas([0.5, 0.5])
    p = posterior_params(sched, [0.0], [0.0], [1.0], [0.0], 2)
    ct = math.sqrt(0.5) * 0.5 / 0.75
    assert p.mean == pytest.approx([ct])
    assert p.var_scale == pytest.approx(0.5 * 0.5 / 0.75)


def test_posterior_rejects_t1():
    sched = build_noise_schedule(5)
    with pytest.raises(ContractError):
        posterior_params(sched, [0.0], [0.0], [0.0], [0.0], 1)


@pytest.mark.parametrize("mode", MODES)
def test_posterior_is_bayes_product(mode):
    # q(x_{t-1}|x_t,x0) is proportional to q(x_t|x_{t-1}) q(x_{t-1}|x0); compare natural parameters
    rng, sched, shift, x0, e = _setup(3, mode=mode)
    for t in range(2, sched.T + 1):
        x_t = rng.standard_normal(3)
        s_t, s_p = shift.k[t] * e, shift.k[t - 1] * e
        ra = math.sqrt(sched.alpha[t])
        prior = forward_marginal(sched, s_p, x0, t - 1)
        prec = sched.alpha[t] / sched.beta[t] + 1 / prior.var_scale
        lin = ra * (x_t - s_t + ra * s_p) / sched.beta[t] + prior.mean / prior.var_scale
        post = posterior_params(sched, s_t, s_p, x_t, x0, t)
        assert post.var_scale == pytest.approx(1 / prec, rel=1e-12)
        np.testing.assert_allclose(post.mean, lin / prec, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("mode", MODES)
def test_eps_and_x0_forms_agree(mode):
    rng, sched, shift, x0, e = _setup(4, mode=mode)
    for t in range(2, sched.T + 1):
        eps = rng.standard_normal(3)
        s_t, s_p = shift.k[t] * e, shift.k[t - 1] * e
        x_t = sample_forward(sched, s_t, x0, t, eps)
        a = posterior_params(sched, s_t, s_p, x_t, x0, t).mean
        b = posterior_mean_from_eps(sched, s_t, s_p, x_t, eps, t)
        c = reverse_mean(sched, s_t, s_p, x_t, g_target(sched, x_t, x0, t), t)
        np.testing.assert_allclose(a, b, atol=1e-10)
        np.testing.assert_allclose(a, c, atol=1e-10)


def test_x0_from_g_inverts_and_rejects_t0():
    rng, sched, shift, x0, e = _setup(5)
    x_t = sample_forward(sched, shift.k[9] * e, x0, 9, rng.standard_normal(3))
    np.testing.assert_allclose(x0_from_g(sched, x_t, g_target(sched, x_t, x0, 9), 9), x0, atol=1e-12)
    with pytest.raises(ContractError):
        x0_from_g(sched, x_t, x_t, 0)


def test_reverse_variance_decoder_step():
    sched = build_noise_schedule(10, 1e-3, 0.1)
    assert reverse_variance(sched, 1) == sched.beta[1]
    assert reverse_variance(sched, 5) == posterior_variance(sched, 5)
    assert reverse_step_params(sched, [0.0], [0.0], [0.0], [0.0], 1).var_scale == sched.beta[1]


@pytest.mark.parametrize("mode", MODES)
def test_mean_rollout_returns_to_x0(mode):
    # noise-free rollout with the exact target lands on x0
    _, sched, shift, x0, e = _setup(6, T=200, mode=mode)
    x = forward_marginal(sched, shift.k[200] * e, x0, 200).mean
    for t in range(200, 0, -1):
        g = g_target(sched, x, x0, t)
        x = reverse_mean(sched, shift.k[t] * e, shift.k[t - 1] * e, x, g, t)
    np.testing.assert_allclose(x, x0, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**32 - 1), st.sampled_from(MODES))
def test_ddim_eta1_matches_ancestral(T, seed, mode):
    rng = np.random.default_rng(seed)
    sched = build_noise_schedule(T, 1e-3, 0.3)
    shift = build_shift_schedule(mode, sched)
    e = rng.standard_normal(2)
    for t in range(2, T + 1):
        x_t, g, z = rng.standard_normal((3, 2))
        sigma = ddim_sigma(sched, t - 1, t, 1.0)
        assert sigma ** 2 == pytest.approx(posterior_variance(sched, t), rel=1e-10)
        anc = reverse_mean(sched, shift.k[t] * e, shift.k[t - 1] * e, x_t, g, t) + sigma * z
        dd = ddim_step(sched, shift.k[t] * e, shift.k[t - 1] * e, x_t, g, t, t - 1, sigma, z)
        np.testing.assert_allclose(dd, anc, atol=1e-10)


def test_ddim_eta0_deterministic_and_x0_jump():
    rng, sched, shift, x0, e = _setup(7)
    x_t = sample_forward(sched, shift.k[30] * e, x0, 30, rng.standard_normal(3))
    g = g_target(sched, x_t, x0, 30)
    a = ddim_step(sched, shift.k[30] * e, shift.k[10] * e, x_t, g, 30, 10, 0.0, None)
    b = ddim_step(sched, shift.k[30] * e, shift.k[10] * e, x_t, g, 30, 10, 0.0, None)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(ddim_step(sched, shift.k[30] * e, 0 * e, x_t, g, 30, 0, 0.0, None), x0, atol=1e-10)


def test_ddim_contract_errors():
    sched = build_noise_schedule(10, 1e-3, 0.1)
    with pytest.raises(ContractError):
        ddim_sigma(sched, 5, 5, 1.0)
    with pytest.raises(ContractError):
        ddim_sigma(sched, 4, 5, -0.1)
    with pytest.raises(ContractError):
        ddim_step(sched, [0.0], [0.0], [0.0], [0.0], 5, 4, 10.0, [0.0])
    assert ddim_sigma(sched, 4, 5, 0.0) == 0.0
