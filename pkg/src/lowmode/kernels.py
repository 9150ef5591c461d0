"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_kernels_py`` take over. Setting the environment
variable ``LOWMODE_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the
active one ("cython" or "numpy").
"""

import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("LOWMODE_PURE_PYTHON") == "1":
        raise ImportError("fallback forced by LOWMODE_PURE_PYTHON")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "numpy" if _ckernels is None else "cython"

out_size = _kernels_py.out_size


def _planes(x):
    h, w = x.shape[-2:]
    return np.ascontiguousarray(x.reshape(-1, h, w))


class _Compiled:
    name = "cython"

    @staticmethod
    def im2col(x, k, stride, pads):
        return _ckernels.im2col(np.ascontiguousarray(x), k, stride, tuple(pads))

    @staticmethod
    def col2im(cols, shape, k, stride, pads):
        return _ckernels.col2im(np.ascontiguousarray(cols), tuple(shape), k, stride, tuple(pads))

    @staticmethod
    def avgpool_forward(x, window, stride, pads):
        y = _ckernels.avgpool_forward(_planes(x), window, stride, tuple(pads))
        return y.reshape(x.shape[:-2] + y.shape[-2:])

    @staticmethod
    def avgpool_backward(grad, h, w, window, stride, pads):
        dx = _ckernels.avgpool_backward(_planes(grad), h, w, window, stride, tuple(pads))
        return dx.reshape(grad.shape[:-2] + (h, w))

    @staticmethod
    def maxpool_forward(x, window, stride, pads):
        y, arg = _ckernels.maxpool_forward(_planes(x), window, stride, tuple(pads))
        lead = x.shape[:-2]
        return y.reshape(lead + y.shape[-2:]), arg.reshape(lead + y.shape[-2:])

    @staticmethod
    def maxpool_backward(grad, arg, h, w, window, stride, pads):
        ho, wo = grad.shape[-2:]
        dx = _ckernels.maxpool_backward(
            _planes(grad),
            np.ascontiguousarray(arg.reshape(-1, ho, wo), dtype=np.int64),
            h, w, window, stride, tuple(pads),
        )
        return dx.reshape(grad.shape[:-2] + (h, w))


class _Numpy:
    name = "numpy"
    im2col = staticmethod(_kernels_py.im2col)
    col2im = staticmethod(_kernels_py.col2im)
    avgpool_forward = staticmethod(_kernels_py.avgpool_forward)
    avgpool_backward = staticmethod(_kernels_py.avgpool_backward)
    maxpool_forward = staticmethod(_kernels_py.maxpool_forward)
    maxpool_backward = staticmethod(_kernels_py.maxpool_backward)


def get_backend(name=None):
    """Return the kernel namespace for ``name`` (default: the active backend)."""
    name = name or BACKEND
    if name == "numpy":
        return _Numpy
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return _Compiled
    raise ValueError(f"unknown kernel backend {name!r}")


active = get_backend()


def use_backend(name):
    """Switch the backend used by ``lowmode.tensor`` for the rest of the process."""
    global active, BACKEND
    active = get_backend(name)
    BACKEND = active.name
    return active
