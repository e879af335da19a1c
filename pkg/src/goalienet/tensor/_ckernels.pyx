# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts and accumulation order as _pykernels."""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


from libc.string cimport memcpy


def im2col(floating[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n * ho * wo, k * k * c), dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    cdef Py_ssize_t b, oy, ox, i, j, iy, ix, row
    cdef size_t nbytes = c * sizeof(floating)
    with nogil:
        row = 0
        for b in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for i in range(k):
                        iy = oy * stride + i - pad
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(k):
                            ix = ox * stride + j - pad
                            if ix < 0 or ix >= w:
                                continue
                            memcpy(&out[row, (i * k + j) * c], &x[b, iy, ix, 0], nbytes)
                    row += 1
    return out_arr


def col2im(floating[:, ::1] cols, shape, int k, int stride, int pad):
    cdef Py_ssize_t n = shape[0], h = shape[1], w = shape[2], c = shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, h, w, c), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, oy, ox, i, j, iy, ix, t, row, ch, col0
    cdef floating* dst
    cdef const floating* src
    with nogil:
        # one output row at a time stays in cache; each element still sums its
        # contributions in (ky, kx) order, matching the fallback bit for bit
        for b in range(n):
            for iy in range(h):
                for i in range(k):
                    t = iy + pad - i
                    if t < 0 or t % stride:
                        continue
                    oy = t // stride
                    if oy >= ho:
                        continue
                    row = (b * ho + oy) * wo
                    for j in range(k):
                        col0 = (i * k + j) * c
                        for ox in range(wo):
                            ix = ox * stride + j - pad
                            if ix >= 0 and ix < w:
                                dst = &out[b, iy, ix, 0]
                                src = &cols[row + ox, col0]
                                for ch in range(c):
                                    dst[ch] += src[ch]
    return out_arr


def maxpool2x2(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = x.shape[2] // 2, wo = x.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, ho, wo), dtype=dtype)
    arg_arr = np.empty((n, c, ho, wo), dtype=np.int8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ci, oy, ox
    cdef floating best, v
    cdef cnp.int8_t q
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        best = x[b, ci, 2 * oy, 2 * ox]
                        q = 0
                        v = x[b, ci, 2 * oy, 2 * ox + 1]
                        if v > best:
                            best = v
                            q = 1
                        v = x[b, ci, 2 * oy + 1, 2 * ox]
                        if v > best:
                            best = v
                            q = 2
                        v = x[b, ci, 2 * oy + 1, 2 * ox + 1]
                        if v > best:
                            best = v
                            q = 3
                        out[b, ci, oy, ox] = best
                        arg[b, ci, oy, ox] = q
    return out_arr, arg_arr


def maxpool2x2_backward(floating[:, :, :, ::1] dout, cnp.int8_t[:, :, :, ::1] arg):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1]
    cdef Py_ssize_t ho = dout.shape[2], wo = dout.shape[3]
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.zeros((n, c, 2 * ho, 2 * wo), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ci, oy, ox
    cdef int q
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oy in range(ho):
                    for ox in range(wo):
                        q = arg[b, ci, oy, ox]
                        dx[b, ci, 2 * oy + q // 2, 2 * ox + q % 2] = dout[b, ci, oy, ox]
    return dx_arr


def upsample2x(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, 2 * h, 2 * w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ci, y, xx
    cdef floating v
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(h):
                    for xx in range(w):
                        v = x[b, ci, y, xx]
                        out[b, ci, 2 * y, 2 * xx] = v
                        out[b, ci, 2 * y, 2 * xx + 1] = v
                        out[b, ci, 2 * y + 1, 2 * xx] = v
                        out[b, ci, 2 * y + 1, 2 * xx + 1] = v
    return out_arr


def upsample2x_backward(floating[:, :, :, ::1] dout):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1]
    cdef Py_ssize_t h = dout.shape[2] // 2, w = dout.shape[3] // 2
    dtype = np.float32 if floating is float else np.float64
    dx_arr = np.empty((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ci, y, xx
    with nogil:
        for b in range(n):
            for ci in range(c):
                for y in range(h):
                    for xx in range(w):
                        dx[b, ci, y, xx] = (
                            (dout[b, ci, 2 * y, 2 * xx] + dout[b, ci, 2 * y, 2 * xx + 1])
                            + dout[b, ci, 2 * y + 1, 2 * xx]
                        ) + dout[b, ci, 2 * y + 1, 2 * xx + 1]
    return dx_arr
