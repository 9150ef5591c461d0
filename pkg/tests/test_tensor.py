import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lowmode import tensor as T
from lowmode.errors import GeometryError, ShapeError


def naive_conv(x, w, stride, pad):
    """Direct nested-loop cross-correlation."""
    n, c, h, wd = x.shape
    co, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for b in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[b, o, i, j] = (patch * w[o]).sum()
    return out


# ---------------------------------------------------------------- conv

def test_conv_sum_of_nine_ones():
    out = T.conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), T.ConvGeometry(3))
    assert out.shape == (1, 1, 1, 1)
    assert out[0, 0, 0, 0] == 9.0


def test_conv_impulse_reproduces_flipped_kernel():
    x = np.zeros((1, 1, 5, 5))
    x[0, 0, 2, 2] = 1.0
    w = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    out = T.conv2d_forward(x, w, T.ConvGeometry(3, 1, 1))
    # cross-correlation of an impulse places the kernel flipped around the centre
    np.testing.assert_array_equal(out[0, 0, 1:4, 1:4], w[0, 0, ::-1, ::-1])
    np.testing.assert_array_equal(out, naive_conv(x, w, 1, 1))


def test_conv_cifar_shape():
    x = np.zeros((1, 3, 32, 32), dtype=np.float32)
    w = np.zeros((16, 3, 3, 3), dtype=np.float32)
    assert T.conv2d_forward(x, w, T.ConvGeometry(3, 1, 1)).shape == (1, 16, 32, 32)


@settings(max_examples=25, deadline=None)
@given(k=st.integers(1, 4), stride=st.integers(1, 3), pad=st.integers(0, 2), h=st.integers(4, 9),
       seed=st.integers(0, 2 ** 16))
def test_conv_matches_nested_loops(k, stride, pad, h, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, h, h))
    w = rng.standard_normal((4, 3, k, k))
    out = T.conv2d_forward(x, w, T.ConvGeometry(k, stride, pad))
    np.testing.assert_allclose(out, naive_conv(x, w, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_backward_zero_upstream():
    rng = np.random.default_rng(0)
    x, w = rng.standard_normal((2, 3, 6, 6)), rng.standard_normal((4, 3, 3, 3))
    g = T.ConvGeometry(3, 1, 1)
    dx, dw = T.conv2d_backward(np.zeros((2, 4, 6, 6)), x, w, g)
    assert not dx.any() and not dw.any()


def test_conv_backward_is_adjoint():
    # <conv(x), d> == <x, dx(d)> and == <w, dw(d)> since conv is bilinear
    rng = np.random.default_rng(1)
    x, w = rng.standard_normal((2, 3, 7, 7)), rng.standard_normal((5, 3, 3, 3))
    g = T.ConvGeometry(3, 2, 1)
    out = T.conv2d_forward(x, w, g)
    d = rng.standard_normal(out.shape)
    dx, dw = T.conv2d_backward(d, x, w, g)
    assert math.isclose((out * d).sum(), (x * dx).sum(), rel_tol=1e-12)
    assert math.isclose((out * d).sum(), (w * dw).sum(), rel_tol=1e-12)


def test_conv_errors():
    with pytest.raises(ShapeError, match="channels"):
        T.conv2d_forward(np.zeros((1, 2, 5, 5)), np.zeros((1, 3, 3, 3)), T.ConvGeometry(3))
    with pytest.raises(GeometryError):
        T.conv2d_forward(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), T.ConvGeometry(3))
    with pytest.raises(ShapeError):
        T.conv2d_backward(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros((1, 1, 3, 3)), T.ConvGeometry(3))


# ---------------------------------------------------------------- pooling

def test_avgpool_examples():
    out = T.avgpool2d_forward(np.ones((1, 1, 5, 5)), 2, 2, (0, 1, 0, 1))
    np.testing.assert_array_equal(out, np.ones((1, 1, 3, 3)))
    x = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
    assert T.avgpool2d_forward(x, 3, 3)[0, 0, 0, 0] == 5.0
    assert T.avgpool2d_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), 2, 2)[0, 0, 0, 0] == 2.5


def test_avgpool_backward_examples():
    g = np.full((1, 1, 1, 1), 0.9)
    np.testing.assert_allclose(T.avgpool2d_backward(g, (1, 1, 3, 3), 3, 3), np.full((1, 1, 3, 3), 0.1))
    grad = T.avgpool2d_backward(np.ones((1, 1, 3, 3)), (1, 1, 5, 5), 2, 2, (0, 1, 0, 1))[0, 0]
    assert grad[0, 0] == 0.25  # inside a full 2x2 window
    assert grad[4, 4] == 1.0  # only element of the clipped bottom-right window
    assert grad[0, 4] == 0.5 and grad[4, 0] == 0.5  # clipped 2x1 edge windows
    assert not T.avgpool2d_backward(np.zeros((1, 1, 3, 3)), (1, 1, 5, 5), 2, 2, (0, 1, 0, 1)).any()


def test_avgpool_geometry_error():
    with pytest.raises(GeometryError):
        T.avgpool2d_forward(np.ones((1, 1, 2, 2)), 3, 1)


def test_maxpool_routes_to_argmax():
    x = np.array([[[[1.0, 5.0], [3.0, 2.0]]]])
    out, arg = T.maxpool2d_forward(x, 2, 2)
    assert out[0, 0, 0, 0] == 5.0
    dx = T.maxpool2d_backward(np.full((1, 1, 1, 1), 7.0), arg, x.shape, 2, 2)
    np.testing.assert_array_equal(dx, [[[[0.0, 7.0], [0.0, 0.0]]]])


def test_global_avgpool_roundtrip():
    x = np.arange(2 * 3 * 4 * 4, dtype=float).reshape(2, 3, 4, 4)
    np.testing.assert_array_equal(T.global_avgpool_forward(x), x.mean(axis=(2, 3)))
    dx = T.global_avgpool_backward(np.ones((2, 3)), x.shape)
    np.testing.assert_array_equal(dx, np.full(x.shape, 1 / 16))


# ---------------------------------------------------------------- elementwise / dense

def test_relu_and_nan_propagation():
    x = np.array([-1.0, 0.0, 2.0, np.nan])
    out = T.relu_forward(x)
    np.testing.assert_array_equal(out[:3], [0.0, 0.0, 2.0])
    assert np.isnan(out[3])
    np.testing.assert_array_equal(T.relu_backward(np.ones(4), x), [0.0, 0.0, 1.0, 0.0])


def test_add_scale_linear():
    a = np.ones((2, 3))
    with pytest.raises(ShapeError):
        T.add(a, np.ones((3, 2)))
    np.testing.assert_array_equal(T.scale(a, 2.5), np.full((2, 3), 2.5))
    w = np.arange(6.0).reshape(2, 3)
    b = np.array([1.0, -1.0])
    out = T.linear_forward(a, w, b)
    np.testing.assert_array_equal(out, [[4.0, 11.0], [4.0, 11.0]])
    dx, dw, db = T.linear_backward(np.ones((2, 2)), a, w)
    np.testing.assert_array_equal(dx, np.tile(w.sum(0), (2, 1)))
    np.testing.assert_array_equal(dw, np.full((2, 3), 2.0))
    np.testing.assert_array_equal(db, [2.0, 2.0])


def test_softmax_uniform_is_ln10():
    loss, grad = T.softmax_cross_entropy(np.zeros((4, 10)), np.arange(4))
    assert math.isclose(loss, math.log(10), rel_tol=1e-15)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)


def test_softmax_rejects_bad_labels():
    with pytest.raises(ValueError):
        T.softmax_cross_entropy(np.zeros((2, 10)), np.array([0, 10]))


def test_batchnorm_zero_variance_gives_beta():
    x = np.full((4, 3, 2, 2), 7.0)
    beta = np.array([0.5, -1.0, 2.0])
    out, _ = T.batchnorm_forward(x, np.ones(3), beta)
    np.testing.assert_allclose(out, np.broadcast_to(beta[None, :, None, None], x.shape), atol=1e-12)


def test_batchnorm_running_stats_and_inference():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 2, 3, 3)) * 3 + 1
    running = (np.zeros(2), np.ones(2))
    T.batchnorm_forward(x, np.ones(2), np.zeros(2), running=running, momentum=1.0)
    np.testing.assert_allclose(running[0], x.mean(axis=(0, 2, 3)))
    m = x.size // 2
    np.testing.assert_allclose(running[1], x.var(axis=(0, 2, 3)) * m / (m - 1))
    with pytest.raises(ValueError):
        T.batchnorm_forward(x, np.ones(2), np.zeros(2), training=False)


def test_count_macs_records_conv_and_linear():
    with T.count_macs() as log:
        T.conv2d_forward(np.zeros((2, 16, 8, 8)), np.zeros((32, 16, 3, 3)), T.ConvGeometry(3, 1, 1), tag="c")
        T.linear_forward(np.zeros((2, 32)), np.zeros((10, 32)), tag="fc")
    assert log == [("conv", "c", 2 * 294912), ("linear", "fc", 2 * 320)]
