"""Pure-numpy implementations of the hot loops.

Same signatures and the same per-element accumulation order as the compiled
``_ckernels`` module, so the two backends agree bitwise. Padding is given as a
``(top, bottom, left, right)`` tuple; spatial axes are always the last two.
"""

import numpy as np


def out_size(n, k, stride, lo, hi):
    return (n + lo + hi - k) // stride + 1


def _pad(x, pads, value=0.0):
    pt, pb, pl, pr = pads
    if not (pt or pb or pl or pr):
        return x
    width = [(0, 0)] * (x.ndim - 2) + [(pt, pb), (pl, pr)]
    return np.pad(x, width, mode="constant", constant_values=value)


def im2col(x, k, stride, pads):
    """(N, C, H, W) -> (N*Ho*Wo, C*k*k), one row per output position."""
    n, c, h, w = x.shape
    ho = out_size(h, k, stride, pads[0], pads[1])
    wo = out_size(w, k, stride, pads[2], pads[3])
    xp = _pad(x, pads)
    col = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        i_max = i + stride * ho
        for j in range(k):
            j_max = j + stride * wo
            col[:, :, i, j] = xp[:, :, i:i_max:stride, j:j_max:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * ho * wo, c * k * k)


def col2im(cols, shape, k, stride, pads):
    n, c, h, w = shape
    pt, pb, pl, pr = pads
    ho = out_size(h, k, stride, pt, pb)
    wo = out_size(w, k, stride, pl, pr)
    col = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + pt + pb, w + pl + pr), dtype=cols.dtype)
    for i in range(k):
        i_max = i + stride * ho
        for j in range(k):
            j_max = j + stride * wo
            img[:, :, i:i_max:stride, j:j_max:stride] += col[:, :, i, j]
    return np.ascontiguousarray(img[:, :, pt:pt + h, pl:pl + w])


def _window_counts(h, w, window, stride, pads, dtype):
    ones = _pad(np.ones((h, w), dtype=dtype), pads)
    ho = out_size(h, window, stride, pads[0], pads[1])
    wo = out_size(w, window, stride, pads[2], pads[3])
    cnt = np.zeros((ho, wo), dtype=dtype)
    for i in range(window):
        for j in range(window):
            cnt += ones[i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cnt


def avgpool_forward(x, window, stride, pads):
    h, w = x.shape[-2:]
    ho = out_size(h, window, stride, pads[0], pads[1])
    wo = out_size(w, window, stride, pads[2], pads[3])
    xp = _pad(x, pads)
    acc = np.zeros(x.shape[:-2] + (ho, wo), dtype=x.dtype)
    for i in range(window):
        for j in range(window):
            acc += xp[..., i:i + stride * ho:stride, j:j + stride * wo:stride]
    return acc / _window_counts(h, w, window, stride, pads, x.dtype)


def avgpool_backward(grad, h, w, window, stride, pads):
    pt, pb, pl, pr = pads
    ho, wo = grad.shape[-2:]
    share = grad / _window_counts(h, w, window, stride, pads, grad.dtype)
    gp = np.zeros(grad.shape[:-2] + (h + pt + pb, w + pl + pr), dtype=grad.dtype)
    for i in range(window):
        for j in range(window):
            gp[..., i:i + stride * ho:stride, j:j + stride * wo:stride] += share
    return np.ascontiguousarray(gp[..., pt:pt + h, pl:pl + w])


def maxpool_forward(x, window, stride, pads):
    """Returns (out, arg) where arg holds the winning window offset i*window+j.

    Ties go to the first offset in row-major scan order.
    """
    h, w = x.shape[-2:]
    ho = out_size(h, window, stride, pads[0], pads[1])
    wo = out_size(w, window, stride, pads[2], pads[3])
    xp = _pad(x, pads, value=-np.inf)
    out = np.full(x.shape[:-2] + (ho, wo), -np.inf, dtype=x.dtype)
    arg = np.zeros(out.shape, dtype=np.int64)
    for i in range(window):
        for j in range(window):
            v = xp[..., i:i + stride * ho:stride, j:j + stride * wo:stride]
            better = v > out
            out = np.where(better, v, out)
            arg[better] = i * window + j
    return out, arg


def maxpool_backward(grad, arg, h, w, window, stride, pads):
    pt, pb, pl, pr = pads
    ho, wo = grad.shape[-2:]
    gp = np.zeros(grad.shape[:-2] + (h + pt + pb, w + pl + pr), dtype=grad.dtype)
    zero = grad.dtype.type(0)
    for i in range(window):
        for j in range(window):
            hit = np.where(arg == i * window + j, grad, zero)
            gp[..., i:i + stride * ho:stride, j:j + stride * wo:stride] += hit
    return np.ascontiguousarray(gp[..., pt:pt + h, pl:pl + w])
