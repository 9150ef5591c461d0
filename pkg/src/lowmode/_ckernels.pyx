# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: im2col/col2im and 2-D pooling.

Mirrors ``_kernels_py`` exactly, including the per-element accumulation
order, so results are bitwise identical between backends. Pooling kernels
work on ``(P, H, W)`` plane stacks; the Python wrapper flattens leading axes.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


cdef inline Py_ssize_t _out(Py_ssize_t n, Py_ssize_t k, Py_ssize_t s,
                            Py_ssize_t lo, Py_ssize_t hi) nogil:
    return (n + lo + hi - k) // s + 1


def im2col(const floating[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride, pads):
    cdef Py_ssize_t pt = pads[0], pb = pads[1], pl = pads[2], pr = pads[3]
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = _out(h, k, stride, pt, pb)
    cdef Py_ssize_t wo = _out(w, k, stride, pl, pr)
    dt = np.float32 if floating is float else np.float64
    out = np.empty((n * ho * wo, c * k * k), dtype=dt)
    cdef floating[:, ::1] cols = out
    cdef Py_ssize_t b, oh, ow, ch, i, j, ih, iw, row, colidx
    with nogil:
        for b in range(n):
            for oh in range(ho):
                for ow in range(wo):
                    row = (b * ho + oh) * wo + ow
                    colidx = 0
                    for ch in range(c):
                        for i in range(k):
                            ih = oh * stride - pt + i
                            for j in range(k):
                                iw = ow * stride - pl + j
                                if 0 <= ih < h and 0 <= iw < w:
                                    cols[row, colidx] = x[b, ch, ih, iw]
                                else:
                                    cols[row, colidx] = 0
                                colidx += 1
    return out


def col2im(const floating[:, ::1] cols, shape, Py_ssize_t k, Py_ssize_t stride, pads):
    cdef Py_ssize_t pt = pads[0], pb = pads[1], pl = pads[2], pr = pads[3]
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = _out(h, k, stride, pt, pb)
    cdef Py_ssize_t wo = _out(w, k, stride, pl, pr)
    dt = np.float32 if floating is float else np.float64
    out = np.zeros((n, c, h, w), dtype=dt)
    cdef floating[:, :, :, ::1] img = out
    cdef Py_ssize_t b, oh, ow, ch, i, j, ih, iw, kk = k * k
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        for oh in range(ho):
                            ih = oh * stride - pt + i
                            if ih < 0 or ih >= h:
                                continue
                            for ow in range(wo):
                                iw = ow * stride - pl + j
                                if 0 <= iw < w:
                                    img[b, ch, ih, iw] += cols[(b * ho + oh) * wo + ow,
                                                               ch * kk + i * k + j]
    return out


def avgpool_forward(const floating[:, :, ::1] x, Py_ssize_t window, Py_ssize_t stride, pads):
    cdef Py_ssize_t pt = pads[0], pb = pads[1], pl = pads[2], pr = pads[3]
    cdef Py_ssize_t p = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = _out(h, window, stride, pt, pb)
    cdef Py_ssize_t wo = _out(w, window, stride, pl, pr)
    dt = np.float32 if floating is float else np.float64
    out = np.empty((p, ho, wo), dtype=dt)
    cdef floating[:, :, ::1] y = out
    cdef Py_ssize_t q, oh, ow, i, j, ih, iw, cnt
    cdef floating acc
    with nogil:
        for q in range(p):
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0
                    cnt = 0
                    for i in range(window):
                        ih = oh * stride - pt + i
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(window):
                            iw = ow * stride - pl + j
                            if 0 <= iw < w:
                                acc = acc + x[q, ih, iw]
                                cnt += 1
                    y[q, oh, ow] = acc / <floating>cnt
    return out


def avgpool_backward(const floating[:, :, ::1] grad, Py_ssize_t h, Py_ssize_t w,
                     Py_ssize_t window, Py_ssize_t stride, pads):
    cdef Py_ssize_t pt = pads[0], pb = pads[1], pl = pads[2], pr = pads[3]
    cdef Py_ssize_t p = grad.shape[0], ho = grad.shape[1], wo = grad.shape[2]
    dt = np.float32 if floating is float else np.float64
    out = np.zeros((p, h, w), dtype=dt)
    share_arr = np.empty((p, ho, wo), dtype=dt)
    cdef floating[:, :, ::1] dx = out
    cdef floating[:, :, ::1] share = share_arr
    cdef Py_ssize_t q, oh, ow, i, j, ih, iw, rows, colsn
    with nogil:
        for q in range(p):
            for oh in range(ho):
                rows = min(oh * stride - pt + window, h) - max(oh * stride - pt, 0)
                for ow in range(wo):
                    colsn = min(ow * stride - pl + window, w) - max(ow * stride - pl, 0)
                    share[q, oh, ow] = grad[q, oh, ow] / <floating>(rows * colsn)
        for q in range(p):
            for i in range(window):
                for j in range(window):
                    for oh in range(ho):
                        ih = oh * stride - pt + i
                        if ih < 0 or ih >= h:
                            continue
                        for ow in range(wo):
                            iw = ow * stride - pl + j
                            if 0 <= iw < w:
                                dx[q, ih, iw] += share[q, oh, ow]
    return out


def maxpool_forward(const floating[:, :, ::1] x, Py_ssize_t window, Py_ssize_t stride, pads):
    cdef Py_ssize_t pt = pads[0], pb = pads[1], pl = pads[2], pr = pads[3]
    cdef Py_ssize_t p = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = _out(h, window, stride, pt, pb)
    cdef Py_ssize_t wo = _out(w, window, stride, pl, pr)
    dt = np.float32 if floating is float else np.float64
    out = np.empty((p, ho, wo), dtype=dt)
    arg_arr = np.zeros((p, ho, wo), dtype=np.int64)
    cdef floating[:, :, ::1] y = out
    cdef cnp.int64_t[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t q, oh, ow, i, j, ih, iw, best_k
    cdef floating best, v
    cdef floating neg_inf = -np.inf
    with nogil:
        for q in range(p):
            for oh in range(ho):
                for ow in range(wo):
                    best = neg_inf
                    best_k = 0
                    for i in range(window):
                        ih = oh * stride - pt + i
                        if ih < 0 or ih >= h:
                            continue
                        for j in range(window):
                            iw = ow * stride - pl + j
                            if 0 <= iw < w:
                                v = x[q, ih, iw]
                                if v > best:
                                    best = v
                                    best_k = i * window + j
                    y[q, oh, ow] = best
                    arg[q, oh, ow] = best_k
    return out, arg_arr


def maxpool_backward(const floating[:, :, ::1] grad, const cnp.int64_t[:, :, ::1] arg,
                     Py_ssize_t h, Py_ssize_t w, Py_ssize_t window, Py_ssize_t stride, pads):
    cdef Py_ssize_t pt = pads[0], pl = pads[2]
    cdef Py_ssize_t p = grad.shape[0], ho = grad.shape[1], wo = grad.shape[2]
    dt = np.float32 if floating is float else np.float64
    out = np.zeros((p, h, w), dtype=dt)
    cdef floating[:, :, ::1] dx = out
    cdef Py_ssize_t q, oh, ow, i, j, ih, iw, a
    with nogil:
        for q in range(p):
            for i in range(window):
                for j in range(window):
                    a = i * window + j
                    for oh in range(ho):
                        ih = oh * stride - pt + i
                        if ih < 0 or ih >= h:
                            continue
                        for ow in range(wo):
                            iw = ow * stride - pl + j
                            if 0 <= iw < w and arg[q, oh, ow] == a:
                                dx[q, ih, iw] += grad[q, oh, ow]
    return out
