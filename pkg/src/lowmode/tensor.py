"""Numeric primitives on NCHW numpy arrays.

Every forward op has a matching backward. Convolution is cross-correlation
(no kernel flip) lowered to a matrix product via im2col. Pooling ops take
``pad`` either as an int or as a ``(top, bottom, left, right)`` tuple.
"""

import contextlib
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GeometryError, ShapeError

DEBUG = os.environ.get("LOWMODE_DEBUG") == "1"

_mac_log = None


@contextlib.contextmanager
def count_macs():
    """Record multiply-accumulates of conv/linear calls made inside the block.

    Yields a list that receives one ``(kind, tag, macs)`` tuple per call.
    """
    global _mac_log
    prev, _mac_log = _mac_log, []
    try:
        yield _mac_log
    finally:
        _mac_log = prev


def _record(kind, tag, macs):
    if _mac_log is not None:
        _mac_log.append((kind, tag, int(macs)))


def _check(arr, op):
    if DEBUG and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return arr


def as_pads(pad):
    if isinstance(pad, (int, np.integer)):
        p = int(pad)
        pads = (p, p, p, p)
    else:
        pads = tuple(int(v) for v in pad)
        if len(pads) == 2:
            pads = (pads[0], pads[0], pads[1], pads[1])
        if len(pads) != 4:
            raise GeometryError(f"padding must be an int or 4 per-side values, got {pad!r}")
    if min(pads) < 0:
        raise GeometryError(f"negative padding {pads}")
    return pads


@dataclass(frozen=True)
class ConvGeometry:
    kernel_size: int
    stride: int = 1
    padding: object = 0
    in_channels: int | None = None
    out_channels: int | None = None

    def __post_init__(self):
        if self.kernel_size < 1:
            raise GeometryError(f"kernel size must be >= 1, got {self.kernel_size}")
        if self.stride < 1:
            raise GeometryError(f"stride must be >= 1, got {self.stride}")
        as_pads(self.padding)

    @property
    def pads(self):
        return as_pads(self.padding)

    def output_hw(self, h, w):
        pt, pb, pl, pr = self.pads
        ho = kernels.out_size(h, self.kernel_size, self.stride, pt, pb)
        wo = kernels.out_size(w, self.kernel_size, self.stride, pl, pr)
        if h + pt + pb < self.kernel_size or w + pl + pr < self.kernel_size or ho < 1 or wo < 1:
            raise GeometryError(
                f"kernel {self.kernel_size} stride {self.stride} pads {self.pads} "
                f"on {h}x{w} input gives an empty output"
            )
        return ho, wo

    def macs(self, h, w):
        ho, wo = self.output_hw(h, w)
        return self.kernel_size ** 2 * self.in_channels * ho * wo * self.out_channels


def _require_4d(x, what):
    if x.ndim != 4:
        raise ShapeError(f"{what} must be 4-D (N, C, H, W), got shape {x.shape}")


# ---------------------------------------------------------------- convolution

def _check_conv(x, w, geom):
    _require_4d(x, "conv input")
    _require_4d(w, "conv kernels")
    c_out, c_in, kh, kw = w.shape
    if kh != kw or kh != geom.kernel_size:
        raise ShapeError(f"kernel spatial size {kh}x{kw} does not match geometry K={geom.kernel_size}")
    if x.shape[1] != c_in:
        raise ShapeError(f"input has {x.shape[1]} channels, kernels expect {c_in}")
    if geom.in_channels is not None and geom.in_channels != c_in:
        raise ShapeError(f"kernels have {c_in} input channels, geometry says {geom.in_channels}")
    if geom.out_channels is not None and geom.out_channels != c_out:
        raise ShapeError(f"kernels have {c_out} filters, geometry says {geom.out_channels}")
    return geom.output_hw(x.shape[2], x.shape[3])


def _pointwise(geom):
    return geom.kernel_size == 1 and geom.pads == (0, 0, 0, 0)


def conv2d_forward(x, w, geom, tag=None, return_cols=False):
    """Cross-correlate ``x`` (N,C,H,W) with ``w`` (C_out,C_in,K,K)."""
    ho, wo = _check_conv(x, w, geom)
    n = x.shape[0]
    c_out = w.shape[0]
    s = geom.stride
    if _pointwise(geom):
        cols = x[:, :, ::s, ::s].transpose(0, 2, 3, 1).reshape(n * ho * wo, -1)
    else:
        cols = kernels.active.im2col(x, geom.kernel_size, s, geom.pads)
    out = cols @ w.reshape(c_out, -1).T
    out = np.ascontiguousarray(out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2))
    _record("conv", tag, cols.shape[0] * cols.shape[1] * c_out)
    _check(out, "conv2d_forward")
    return (out, cols) if return_cols else out


def conv2d_backward(dout, x, w, geom, cols=None):
    """Returns ``(grad_input, grad_kernels)``."""
    ho, wo = _check_conv(x, w, geom)
    n, c_in, h, wd = x.shape
    c_out = w.shape[0]
    if dout.shape != (n, c_out, ho, wo):
        raise ShapeError(f"upstream gradient shape {dout.shape} != conv output {(n, c_out, ho, wo)}")
    s = geom.stride
    if cols is None:
        if _pointwise(geom):
            cols = x[:, :, ::s, ::s].transpose(0, 2, 3, 1).reshape(n * ho * wo, -1)
        else:
            cols = kernels.active.im2col(x, geom.kernel_size, s, geom.pads)
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
    dw = (dmat.T @ cols).reshape(w.shape)
    dcols = dmat @ w.reshape(c_out, -1)
    if _pointwise(geom):
        dx = np.zeros_like(x)
        dx[:, :, ::s, ::s] = dcols.reshape(n, ho, wo, c_in).transpose(0, 3, 1, 2)
    else:
        dx = kernels.active.col2im(dcols, x.shape, geom.kernel_size, s, geom.pads)
    return _check(dx, "conv2d_backward"), _check(dw, "conv2d_backward")


# ---------------------------------------------------------------- pooling

def _pool_geometry(h, w, window, stride, pads):
    pt, pb, pl, pr = pads
    if window < 1 or stride < 1:
        raise GeometryError(f"pool window {window} / stride {stride} must be >= 1")
    if window > h + pt + pb or window > w + pl + pr:
        raise GeometryError(f"pool window {window} exceeds padded input {h + pt + pb}x{w + pl + pr}")
    if max(pads) >= window:
        raise GeometryError(f"padding {pads} would create windows with no input elements")
    ho = kernels.out_size(h, window, stride, pt, pb)
    wo = kernels.out_size(w, window, stride, pl, pr)
    # last window must still overlap the input
    if (ho - 1) * stride - pt >= h or (wo - 1) * stride - pl >= w:
        raise GeometryError(f"pooling {window}/{stride} with pads {pads} has an empty trailing window")
    return ho, wo


def pool_output_hw(h, w, window, stride, pad=0):
    return _pool_geometry(h, w, window, stride, as_pads(pad))


def avgpool2d_forward(x, window, stride, pad=0):
    """Mean over each window; the divisor counts only in-bounds elements."""
    pads = as_pads(pad)
    _pool_geometry(x.shape[-2], x.shape[-1], window, stride, pads)
    return _check(kernels.active.avgpool_forward(x, window, stride, pads), "avgpool2d_forward")


def avgpool2d_backward(grad, input_shape, window, stride, pad=0):
    pads = as_pads(pad)
    h, w = input_shape[-2:]
    ho, wo = _pool_geometry(h, w, window, stride, pads)
    if tuple(grad.shape) != tuple(input_shape[:-2]) + (ho, wo):
        raise ShapeError(f"upstream gradient shape {grad.shape} != pool output {tuple(input_shape[:-2]) + (ho, wo)}")
    return kernels.active.avgpool_backward(grad, h, w, window, stride, pads)


def maxpool2d_forward(x, window, stride, pad=0):
    """Returns ``(out, argmax)``; argmax feeds :func:`maxpool2d_backward`."""
    pads = as_pads(pad)
    _pool_geometry(x.shape[-2], x.shape[-1], window, stride, pads)
    return kernels.active.maxpool_forward(x, window, stride, pads)


def maxpool2d_backward(grad, argmax, input_shape, window, stride, pad=0):
    pads = as_pads(pad)
    h, w = input_shape[-2:]
    if grad.shape != argmax.shape:
        raise ShapeError(f"gradient shape {grad.shape} != argmax shape {argmax.shape}")
    return kernels.active.maxpool_backward(grad, argmax, h, w, window, stride, pads)


def global_avgpool_forward(x):
    _require_4d(x, "global_avgpool input")
    return x.mean(axis=(2, 3))


def global_avgpool_backward(dout, input_shape):
    n, c, h, w = input_shape
    if dout.shape != (n, c):
        raise ShapeError(f"upstream gradient shape {dout.shape} != {(n, c)}")
    return np.broadcast_to((dout / (h * w))[:, :, None, None], input_shape).copy()


# ---------------------------------------------------------------- elementwise

def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(dout, x):
    if dout.shape != x.shape:
        raise ShapeError(f"relu gradient shape {dout.shape} != input shape {x.shape}")
    return np.where(x > 0, dout, 0).astype(dout.dtype, copy=False)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return a + b


def scale(x, s):
    return x * x.dtype.type(s)


# ---------------------------------------------------------------- dense

def linear_forward(x, w, b=None, tag=None):
    """``x`` (N, D_in), ``w`` (D_out, D_in) -> (N, D_out)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x @ w.T
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"linear bias shape {b.shape} != ({w.shape[0]},)")
        out = out + b
    _record("linear", tag, x.shape[0] * w.shape[0] * w.shape[1])
    return _check(out, "linear_forward")


def linear_backward(dout, x, w):
    """Returns ``(grad_input, grad_weight, grad_bias)``."""
    if dout.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(f"linear gradient shape {dout.shape} != {(x.shape[0], w.shape[0])}")
    return dout @ w, dout.T @ x, dout.sum(axis=0)


# ---------------------------------------------------------------- batchnorm

def batchnorm_forward(x, gamma, beta, eps=1e-5, training=True, running=None, momentum=0.1):
    """Per-channel normalization of an NCHW (or NC) array.

    In training mode batch statistics are used and, when ``running`` is a
    ``(mean, var)`` pair of arrays, they are updated in place. In inference
    mode ``running`` supplies the statistics. Returns ``(out, cache)``.
    """
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    shape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm affine shapes {gamma.shape}/{beta.shape} != ({c},)")
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if running is not None:
            m = x.size // c
            rmean, rvar = running
            rmean *= 1 - momentum
            rmean += momentum * mean
            rvar *= 1 - momentum
            rvar += momentum * var * (m / max(m - 1, 1))
    else:
        if running is None:
            raise ValueError("inference-mode batchnorm needs running statistics")
        mean, var = running
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = xhat * gamma.reshape(shape) + beta.reshape(shape)
    cache = (xhat, inv_std, gamma, axes, shape, training)
    return _check(out.astype(x.dtype, copy=False), "batchnorm_forward"), cache


def batchnorm_backward(dout, cache):
    """Returns ``(grad_input, grad_gamma, grad_beta)``."""
    xhat, inv_std, gamma, axes, shape, training = cache
    if dout.shape != xhat.shape:
        raise ShapeError(f"batchnorm gradient shape {dout.shape} != {xhat.shape}")
    dbeta = dout.sum(axis=axes)
    dgamma = (dout * xhat).sum(axis=axes)
    g = (gamma * inv_std).reshape(shape)
    if not training:
        return dout * g, dgamma, dbeta
    m = dout.size // dbeta.size
    dx = g * (dout - (dbeta.reshape(shape) + xhat * dgamma.reshape(shape)) / m)
    return dx, dgamma, dbeta


# ---------------------------------------------------------------- loss

def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch. Returns ``(loss, grad_logits)``."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N, classes), got {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    grad /= n
    return float(loss), grad.astype(logits.dtype, copy=False)
