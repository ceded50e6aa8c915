# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter kernels for the convolution lowering.

im2col/col2im are the only loops hot enough to warrant native code; the
matrix products they feed stay in BLAS through NumPy. col2im iterates the
kernel offset (kh, kw) outermost so accumulation order, and therefore
rounding, is bit-identical to the pure backend.
"""

from libc.string cimport memcpy

import numpy as np


def im2col(const double[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    """Gather k x k patches of an NHWC image into a [N*OH*OW, k*k*C] matrix."""
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    out_arr = np.zeros((n * oh * ow, k * k * c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, r, s, kh, kw, ih, iw, row, col0
    with nogil:
        for i in range(n):
            for r in range(oh):
                for s in range(ow):
                    row = (i * oh + r) * ow + s
                    for kh in range(k):
                        ih = r * stride + kh - pad
                        if ih < 0 or ih >= h:
                            continue
                        for kw in range(k):
                            iw = s * stride + kw - pad
                            if iw < 0 or iw >= w:
                                continue
                            col0 = (kh * k + kw) * c
                            memcpy(&out[row, col0], &x[i, ih, iw, 0],
                                   c * sizeof(double))
    return out_arr


def col2im(const double[:, ::1] cols, Py_ssize_t n, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t c, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    """Scatter-add patch rows back onto an NHWC image; adjoint of im2col."""
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    out_arr = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, r, s, kh, kw, ci, ih, iw, row, col0
    with nogil:
        for kh in range(k):
            for kw in range(k):
                col0 = (kh * k + kw) * c
                for i in range(n):
                    for r in range(oh):
                        ih = r * stride + kh - pad
                        if ih < 0 or ih >= h:
                            continue
                        for s in range(ow):
                            iw = s * stride + kw - pad
                            if iw < 0 or iw >= w:
                                continue
                            row = (i * oh + r) * ow + s
                            for ci in range(c):
                                out[i, ih, iw, ci] += cols[row, col0 + ci]
    return out_arr
