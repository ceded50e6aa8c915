"""Pure-NumPy fallback for the convolution lowering kernels.

Both backends must agree bit-for-bit: im2col is a straight gather, and
col2im accumulates with the kernel offset (kh, kw) as the outermost loop so
the floating-point addition order per destination element matches the
native kernel exactly.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k, stride, pad):
    """Gather k x k patches of an NHWC image into a [N*OH*OW, k*k*C] matrix.

    Column index flattens as (kh, kw, c), matching a row-major reshape of a
    [k, k, C, F] weight tensor.
    """
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    oh, ow = win.shape[1], win.shape[2]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, k * k * c)
    return np.ascontiguousarray(cols)


def col2im(cols, n, h, w, c, k, stride, pad):
    """Scatter-add patch rows back onto an NHWC image; the exact adjoint of
    im2col for the same geometry."""
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    blocks = cols.reshape(n, oh, ow, k, k, c)
    padded = np.zeros((n, h + 2 * pad, w + 2 * pad, c))
    for kh in range(k):
        for kw in range(k):
            padded[:, kh:kh + stride * oh:stride, kw:kw + stride * ow:stride, :] += blocks[:, :, :, kh, kw, :]
    if pad == 0:
        return padded
    return np.ascontiguousarray(padded[:, pad:pad + h, pad:pad + w, :])
