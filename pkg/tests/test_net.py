import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftdiff.diffusion import ContractError
from shiftdiff.net import (OptimizerState, init_mlp, loss_and_grads, optimizer_step, silu, silu_grad,
                           time_embedding, weighted_sq_error)


def test_silu_and_grad():
    z = np.linspace(-6, 6, 101)
    h = 1e-6
    np.testing.assert_allclose(silu_grad(z), (silu(z + h) - silu(z - h)) / (2 * h), atol=1e-8)
    assert silu(0.0) == 0.0
    assert np.all(np.isfinite(silu(np.array([-1e3, 1e3]))))


def test_time_embedding_shape_and_range():
    emb = time_embedding(np.array([0, 1, 200]), 64)
    assert emb.shape == (3, 64)
    assert np.all(np.abs(emb) <= 1.0)
    np.testing.assert_array_equal(emb[0, :32], 0.0)
    np.testing.assert_array_equal(emb[0, 32:], 1.0)
    assert time_embedding(np.array([3]), 7).shape == (1, 7)


def test_output_shape_and_condition_contract():
    rng = np.random.default_rng(0)
    net = init_mlp(2, rng, hidden=16, depth=2, time_dim=8)
    out = net(rng.standard_normal((5, 2)), np.arange(1, 6))
    assert out.shape == (5, 2)
    with pytest.raises(ContractError):
        net(np.zeros((1, 2)), 1, np.array([0]))
    cnet = init_mlp(2, rng, hidden=16, depth=1, time_dim=8, num_classes=3, conditional=True)
    assert cnet(np.zeros((2, 2)), 4, np.array([0, 2])).shape == (2, 2)
    with pytest.raises(ContractError):
        cnet(np.zeros((1, 2)), 1)


def test_condition_changes_output():
    rng = np.random.default_rng(1)
    cnet = init_mlp(2, rng, hidden=16, depth=2, time_dim=8, num_classes=2, conditional=True)
    x = np.zeros((1, 2))
    assert not np.allclose(cnet(x, 5, np.array([0])), cnet(x, 5, np.array([1])))


def _fd_check(net, x, t, target, cond, sigma, picks, h=1e-6):
    loss, grads, grad_x, grad_target = loss_and_grads(net, x, t, target, cond, sigma)
    worst = 0.0
    for name, idx in picks:
        p = net.params[name]
        old = p[idx]
        p[idx] = old + h
        up = loss_and_grads(net, x, t, target, cond, sigma)[0]
        p[idx] = old - h
        down = loss_and_grads(net, x, t, target, cond, sigma)[0]
        p[idx] = old
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - grads[name][idx]) / max(abs(fd), abs(grads[name][idx]), 1e-6))
    return worst, grad_x, grad_target


def test_parameter_gradients_central_difference():
    rng = np.random.default_rng(2)
    net = init_mlp(3, rng, hidden=12, depth=3, time_dim=6, num_classes=2, conditional=True)
    x, target = rng.standard_normal((8, 3)), rng.standard_normal((8, 3))
    t, cond = rng.integers(1, 50, 8), rng.integers(0, 2, 8)
    names = sorted(net.params)
    picks = []
    for _ in range(200):
        name = names[rng.integers(len(names))]
        picks.append((name, tuple(int(rng.integers(s)) for s in net.params[name].shape)))
    worst, _, _ = _fd_check(net, x, t, target, cond, np.array([0.5, 1.0, 2.0]), picks)
    assert worst <= 1e-5


def test_input_and_target_gradients():
    rng = np.random.default_rng(3)
    net = init_mlp(2, rng, hidden=10, depth=2, time_dim=4)
    x, target, t = rng.standard_normal((4, 2)), rng.standard_normal((4, 2)), np.array([1, 2, 3, 4])
    _, _, grad_x, grad_target = loss_and_grads(net, x, t, target)
    h = 1e-6
    for i in range(4):
        for j in range(2):
            for arr, grad in ((x, grad_x), (target, grad_target)):
                old = arr[i, j]
                arr[i, j] = old + h
                up = loss_and_grads(net, x, t, target)[0]
                arr[i, j] = old - h
                down = loss_and_grads(net, x, t, target)[0]
                arr[i, j] = old
                assert grad[i, j] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-9)


def test_weighted_sq_error():
    r = np.array([[1.0, 2.0]])
    assert weighted_sq_error(r)[0] == 5.0
    assert weighted_sq_error(r, np.array([1.0, 4.0]))[0] == 2.0


def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([1.0, -1.0])}
    st_ = OptimizerState.for_params(p, lr=0.1, ema_decay=0.5)
    optimizer_step(st_, p, {"w": np.array([3.0, -0.01])})
    np.testing.assert_allclose(p["w"], [0.9, -0.9], atol=1e-6)
    np.testing.assert_allclose(st_.ema["w"], [0.95, -0.95], atol=1e-6)
    with pytest.raises(ValueError):
        optimizer_step(st_, p, {"w": np.zeros(3)})


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_training_reduces_loss_on_fixed_batch(seed, depth):
    rng = np.random.default_rng(seed)
    net = init_mlp(2, rng, hidden=16, depth=depth, time_dim=4)
    x, target, t = rng.standard_normal((16, 2)), rng.standard_normal((16, 2)), rng.integers(1, 20, 16)
    opt = OptimizerState.for_params(net.params, lr=1e-2)
    first = loss_and_grads(net, x, t, target)[0]
    for _ in range(60):
        _, grads, _, _ = loss_and_grads(net, x, t, target)
        optimizer_step(opt, net.params, grads)
    assert loss_and_grads(net, x, t, target)[0] < first
