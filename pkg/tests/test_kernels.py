"""The compiled and numpy kernel backends must agree bit for bit."""

import numpy as np
import pytest

from lowmode import kernels

try:
    kernels.get_backend("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled kernels not built")

CASES = [  # (window/kernel, stride, pads)
    (3, 1, (1, 1, 1, 1)),
    (2, 2, (0, 1, 0, 1)),
    (3, 2, (1, 1, 1, 1)),
    (5, 1, (2, 2, 2, 2)),
    (2, 2, (0, 0, 0, 0)),
]


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_out_size():
    assert kernels.out_size(5, 2, 2, 0, 1) == 3
    assert kernels.out_size(32, 3, 1, 1, 1) == 32


@needs_ext
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,stride,pads", CASES)
def test_backends_bitwise_equal(k, stride, pads, dtype):
    rng = np.random.default_rng(k * 10 + stride)
    x = rng.standard_normal((2, 3, 9, 9)).astype(dtype)
    c, n = kernels.get_backend("cython"), kernels.get_backend("numpy")
    if max(pads) < k:
        a, b = c.avgpool_forward(x, k, stride, pads), n.avgpool_forward(x, k, stride, pads)
        assert np.array_equal(a, b)
        g = rng.standard_normal(a.shape).astype(dtype)
        assert np.array_equal(c.avgpool_backward(g, 9, 9, k, stride, pads),
                              n.avgpool_backward(g, 9, 9, k, stride, pads))
        (mc, ac), (mn, an) = c.maxpool_forward(x, k, stride, pads), n.maxpool_forward(x, k, stride, pads)
        assert np.array_equal(mc, mn) and np.array_equal(ac, an)
        assert np.array_equal(c.maxpool_backward(g, ac, 9, 9, k, stride, pads),
                              n.maxpool_backward(g, an, 9, 9, k, stride, pads))
    cols = c.im2col(x, k, stride, pads)
    assert np.array_equal(cols, n.im2col(x, k, stride, pads))
    assert np.array_equal(c.col2im(cols, x.shape, k, stride, pads), n.col2im(cols, x.shape, k, stride, pads))


def test_use_backend_switches_and_restores():
    original = kernels.BACKEND
    try:
        assert kernels.use_backend("numpy").name == "numpy"
        assert kernels.BACKEND == "numpy"
    finally:
        kernels.use_backend(original)
    assert kernels.BACKEND == original
