import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowmode.errors import ConfigError, ShapeError
from lowmode.nn import Param
from lowmode.transform import (
    KernelBank,
    PoolRule,
    TransformSpec,
    backprop_through_transform,
    default_rule,
    refresh_if_dirty,
    transform_array,
    transform_kernels,
)
from lowmode.trainer import sgd_step


def bank_for(w, spec=None):
    return KernelBank(Param("w", w), spec or TransformSpec(2))


def test_default_rules():
    assert default_rule(5, 2) == PoolRule(2, 2, (0, 1, 0, 1), 3)
    assert default_rule(3, 2) == PoolRule(3, 2, (0, 0, 0, 0), 1)
    for k in range(2, 12):
        for r in (2, 3):
            rule = default_rule(k, r)
            assert rule.out_k in (-(-k // r), k // r) and rule.out_k >= 1


def test_rounding_modes():
    assert default_rule(3, 2, "ceil").out_k == 2
    assert default_rule(5, 2, "floor").out_k == 2
    with pytest.raises(ConfigError):
        default_rule(3, 2, "nearest")
    with pytest.raises(ConfigError):
        TransformSpec(1)


def test_low_padding_keeps_same_convs_same():
    spec = TransformSpec(2)
    assert spec.low_padding(5, (2, 2, 2, 2)) == (1, 1, 1, 1)
    assert spec.low_padding(3, (1, 1, 1, 1)) == (0, 0, 0, 0)


def test_transform_examples():
    spec = TransformSpec(2)
    np.testing.assert_array_equal(transform_array(np.ones((2, 3, 5, 5)), spec), np.ones((2, 3, 3, 3)))
    w = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    assert transform_array(w, spec)[0, 0, 0, 0] == 5.0
    assert bank_for(np.zeros((4, 2, 5, 5))).out_shape == (4, 2, 3, 3)


def test_backprop_examples():
    bank = bank_for(np.zeros((1, 1, 3, 3)))
    g = backprop_through_transform(bank, np.full((1, 1, 1, 1), 4.5))
    np.testing.assert_array_equal(g, np.full((1, 1, 3, 3), 0.5))
    assert not backprop_through_transform(bank, np.zeros((1, 1, 1, 1))).any()
    with pytest.raises(ShapeError):
        backprop_through_transform(bank, np.zeros((1, 1, 3, 3)))


@settings(max_examples=20, deadline=None)
@given(k=st.sampled_from([3, 5]), a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2 ** 16))
def test_linearity(k, a, b, seed):
    rng = np.random.default_rng(seed)
    w1, w2 = rng.standard_normal((2, 3, 3, k, k))
    spec = TransformSpec(2)
    lhs = transform_array(a * w1 + b * w2, spec)
    rhs = a * transform_array(w1, spec) + b * transform_array(w2, spec)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-13, atol=1e-13)


def test_mean_preserved_for_divisible_rule():
    w = np.random.default_rng(0).standard_normal((4, 3, 3, 3))
    t = transform_array(w, TransformSpec(2))
    np.testing.assert_allclose(t[..., 0, 0], w.mean(axis=(2, 3)), rtol=0, atol=1e-15)


@pytest.mark.parametrize("k", [3, 5])
def test_grad_matches_finite_differences(k):
    rng = np.random.default_rng(k)
    w = rng.standard_normal((2, 2, k, k))
    spec = TransformSpec(2)
    c = rng.standard_normal(transform_array(w, spec).shape)
    analytic = backprop_through_transform(bank_for(w, spec), c)
    h = 1e-6
    numeric = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        numeric[idx] = ((transform_array(wp, spec) * c).sum() - (transform_array(wm, spec) * c).sum()) / (2 * h)
    assert np.abs(analytic - numeric).max() / np.abs(numeric).max() < 1e-6


def test_cache_refresh_contract():
    w = np.random.default_rng(0).standard_normal((2, 2, 5, 5))
    bank = bank_for(w)
    assert bank.dirty
    refresh_if_dirty(bank)
    cached = bank.transformed
    refresh_if_dirty(bank)
    assert bank.transformed is cached  # no-op
    # an optimizer step bumps the version and invalidates the cache
    bank.param.grad = np.ones_like(w)
    sgd_step({"w": bank.param}, {"w": bank.param.grad}, 0.1, 0.0, 0.0)
    assert bank.dirty
    refresh_if_dirty(bank)
    np.testing.assert_array_equal(bank.transformed, transform_kernels(bank))
    np.testing.assert_allclose(bank.transformed, transform_array(w, TransformSpec(2)))  # w was updated in place
    assert not np.array_equal(bank.transformed, cached)


def test_custom_rule_validation():
    spec = TransformSpec(2, rules={5: PoolRule(3, 2, (0, 0, 0, 0), 2)})
    assert spec.out_size(5) == 2
    with pytest.raises(ConfigError):
        TransformSpec(2, rules={5: PoolRule(3, 2, (0, 0, 0, 0), 3)})


def test_round_trip_dict():
    spec = TransformSpec(2, "odd", {5: PoolRule(2, 2, (0, 1, 0, 1), 3)})
    assert TransformSpec.from_dict(spec.to_dict()) == spec
