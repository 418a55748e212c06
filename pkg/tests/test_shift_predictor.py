import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftdiff.schedules import ConfigurationError
from shiftdiff.shift_predictor import (PredictorKind, class_mean, fixed_table, interpolate_shift, predict_shift,
                                       shift_grads, trainable)


def test_fixed_table_levels():
    p = fixed_table(3, 2)
    np.testing.assert_array_equal(p(np.arange(3)), [[-1, -1], [0, 0], [1, 1]])
    assert p.params() == {}
    np.testing.assert_array_equal(fixed_table(1, 2)(np.array([0])), [[0, 0]])


def test_class_mean():
    data = np.array([[1.0, 0.0], [3.0, 2.0], [-1.0, -1.0]])
    p = class_mean(data, np.array([0, 0, 1]), 2)
    np.testing.assert_array_equal(p(np.array([0, 1])), [[2, 1], [-1, -1]])
    with pytest.raises(ValueError, match="class 2"):
        class_mean(data, np.array([0, 0, 1]), 3)


def test_onehot_input_equals_ids():
    p = trainable(3, 2, np.random.default_rng(0), scale=1.0)
    np.testing.assert_array_equal(p(np.eye(3)), p(np.arange(3)))
    with pytest.raises(ValueError, match="unknown condition"):
        p(np.array([3]))


def test_trainable_starts_at_zero_and_exposes_params():
    p = trainable(2, 4)
    assert np.all(p(np.array([0, 1])) == 0)
    assert set(p.params()) == {"predictor.weight", "predictor.bias"}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_interpolation_properties(seed, lam):
    p = trainable(4, 3, np.random.default_rng(seed), scale=2.0)
    c1, c2 = np.array([1]), np.array([3])
    out = interpolate_shift(p, c1, c2, lam)
    np.testing.assert_allclose(out, lam * p(c1) + (1 - lam) * p(c2), atol=1e-12)
    np.testing.assert_array_equal(interpolate_shift(p, c1, c2, 1.0), p(c1))
    np.testing.assert_array_equal(interpolate_shift(p, c1, c2, 0.0), p(c2))


@pytest.mark.parametrize("lam", [-0.01, 1.01])
def test_interpolation_range(lam):
    with pytest.raises(ValueError, match="lambda"):
        interpolate_shift(fixed_table(2, 2), np.array([0]), np.array([1]), lam)


def test_shift_grads_by_finite_difference():
    rng = np.random.default_rng(1)
    p = trainable(3, 2, rng, scale=1.0)
    cond = np.array([0, 2, 2, 1])
    target = rng.standard_normal((4, 2))
    loss = lambda: float(((predict_shift(p, cond) - target) ** 2).sum())  # noqa: E731
    grads = shift_grads(p, cond, 2 * (predict_shift(p, cond) - target))
    h = 1e-6
    for name, arr in p.params().items():
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss()
            arr[idx] = old - h
            down = loss()
            arr[idx] = old
            assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-6, abs=1e-8)
    assert shift_grads(fixed_table(2, 2), np.array([0]), np.ones((1, 2))) == {}


def test_kind_parse():
    assert PredictorKind.parse("Class-Mean") is PredictorKind.CLASS_MEAN
    with pytest.raises(ConfigurationError, match="shift.predictor"):
        PredictorKind.parse("mlp")
