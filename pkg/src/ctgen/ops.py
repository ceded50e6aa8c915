"""Forward and backward math for every layer operation.

All values are C-contiguous float64 arrays in NHWC layout (or [N, F] for
flat features). Forward functions return ``(out, cache)`` where ``cache``
holds exactly what the matching backward function needs; inference callers
discard it. Operations never mutate their inputs.
"""

import numpy as np

from ctgen import kernels
from ctgen.errors import ConfigError, DimensionError, DomainError

_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = 1.0 - 2.0 ** -53


def as_tensor(x):
    """Coerce to the library's value type: C-contiguous float64 ndarray."""
    return np.ascontiguousarray(x, dtype=np.float64)


def _check_conv_args(x, w, stride, transpose=False):
    if x.ndim != 4:
        raise DimensionError(f"expected NHWC input, got shape {x.shape}")
    if w.ndim != 4 or w.shape[0] != w.shape[1]:
        raise DimensionError(f"expected [k,k,·,·] weights, got shape {w.shape}")
    k = w.shape[0]
    if k % 2 != 1:
        raise ConfigError(f"kernel size must be odd, got {k}")
    if stride not in (1, 2):
        raise ConfigError(f"stride must be 1 or 2, got {stride}")
    cin = w.shape[3] if transpose else w.shape[2]
    if x.shape[3] != cin:
        raise DimensionError(
            f"input channels {x.shape[3]} do not match weight channels {cin}"
        )


# ---------------------------------------------------------------------------
# Convolutions. conv2d lowers to im2col + GEMM; conv2d_transpose is its exact
# adjoint as a linear map, built from the same gather/scatter kernels, so the
# inner-product identity <conv(a,w), x> == <a, tconv(x,w)> holds to rounding.
# ---------------------------------------------------------------------------

def conv2d_forward(x, w, b, stride):
    """Same-padded NHWC convolution: [N,H,W,Cin] -> [N,ceil(H/s),ceil(W/s),Cout]."""
    _check_conv_args(x, w, stride)
    k, _, cin, cout = w.shape
    if b.shape != (cout,):
        raise DimensionError(f"bias shape {b.shape} does not match {cout} filters")
    n, h, wd, _ = x.shape
    pad = (k - 1) // 2
    oh = (h - 1) // stride + 1
    ow = (wd - 1) // stride + 1
    cols = kernels.im2col(x, k, stride, pad)
    out = cols @ w.reshape(k * k * cin, cout)
    out += b
    out = out.reshape(n, oh, ow, cout)
    cache = (cols, x.shape, w, stride)
    return out, cache


def conv2d_backward(dout, cache):
    cols, x_shape, w, stride = cache
    n, h, wd, cin = x_shape
    k, _, _, cout = w.shape
    pad = (k - 1) // 2
    dout_mat = dout.reshape(-1, cout)
    dw = (cols.T @ dout_mat).reshape(w.shape)
    db = dout_mat.sum(axis=0)
    dcols = dout_mat @ w.reshape(k * k * cin, cout).T
    dx = kernels.col2im(dcols, n, h, wd, cin, k, stride, pad)
    return dx, dw, db


def conv2d_transpose_forward(x, w, b, stride):
    """Adjoint of conv2d: [N,H,W,Cin] -> [N,H*s,W*s,Cout], weights [k,k,Cout,Cin]."""
    _check_conv_args(x, w, stride, transpose=True)
    k, _, cout, cin = w.shape
    if b.shape != (cout,):
        raise DimensionError(f"bias shape {b.shape} does not match {cout} filters")
    n, h, wd, _ = x.shape
    pad = (k - 1) // 2
    dcols = x.reshape(-1, cin) @ w.reshape(k * k * cout, cin).T
    out = kernels.col2im(dcols, n, h * stride, wd * stride, cout, k, stride, pad)
    out += b
    cache = (x, w, stride)
    return out, cache


def conv2d_transpose_backward(dout, cache):
    x, w, stride = cache
    k, _, cout, cin = w.shape
    pad = (k - 1) // 2
    cols_d = kernels.im2col(dout, k, stride, pad)
    dx = (cols_d @ w.reshape(k * k * cout, cin)).reshape(x.shape)
    dw = (cols_d.T @ x.reshape(-1, cin)).reshape(w.shape)
    db = dout.sum(axis=(0, 1, 2))
    return dx, dw, db


# ---------------------------------------------------------------------------
# Dense / activations / regularizers
# ---------------------------------------------------------------------------

def dense_forward(x, w, b):
    if x.ndim != 2 or w.ndim != 2:
        raise DimensionError(f"dense expects 2-D operands, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"inner dimensions differ: {x.shape[1]} vs {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"bias shape {b.shape} does not match {w.shape[1]} units")
    out = x @ w + b
    return out, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


def leaky_relu_forward(x, slope):
    if not 0.0 <= slope < 1.0:
        raise ConfigError(f"leak slope must be in [0,1), got {slope}")
    out = np.maximum(x, slope * x)
    return out, (x, slope)


def leaky_relu_backward(dout, cache):
    x, slope = cache
    return (dout * np.where(x > 0, 1.0, slope),)


def sigmoid_forward(x):
    # Stable two-branch form; output clamped into the open interval so any
    # downstream log stays finite.
    t = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    np.clip(y, _SIGMOID_LO, _SIGMOID_HI, out=y)
    return y, (y,)


def sigmoid_backward(dout, cache):
    (y,) = cache
    return (dout * y * (1.0 - y),)


def dropout_forward(x, p, mode, rng):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0,1), got {p}")
    if mode != "train" or p == 0.0:
        return x, (None,)
    keep = rng.random(x.shape) >= p
    mask = keep / (1.0 - p)
    return x * mask, (mask,)


def dropout_backward(dout, cache):
    (mask,) = cache
    if mask is None:
        return (dout,)
    return (dout * mask,)


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

class BatchNormState:
    """Per-channel running statistics updated as ema <- m*ema + (1-m)*batch."""

    __slots__ = ("running_mean", "running_var", "momentum", "eps")

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        if not 0.0 < momentum < 1.0:
            raise ConfigError(f"momentum must be in (0,1), got {momentum}")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps


def batch_norm_forward(x, gamma, beta, state, mode, update_running=True):
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"gamma/beta must be 1-D of length {c}, got {gamma.shape} and {beta.shape}"
        )
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        if x.shape[0] < 2:
            raise DomainError("train-mode batch norm needs a batch of at least 2")
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = (x - mu) * inv
        out = gamma * xhat + beta
        if update_running:
            m = state.momentum
            state.running_mean = m * state.running_mean + (1.0 - m) * mu
            state.running_var = m * state.running_var + (1.0 - m) * var
        count = x.size // c
        return out, ("train", xhat, inv, gamma, count, axes)
    inv = 1.0 / np.sqrt(state.running_var + state.eps)
    out = gamma * (x - state.running_mean) * inv + beta
    return out, ("infer", x, state.running_mean, inv, gamma, axes)


def batch_norm_backward(dout, cache):
    if cache[0] == "train":
        _, xhat, inv, gamma, count, axes = cache
        dbeta = dout.sum(axis=axes)
        dgamma = (dout * xhat).sum(axis=axes)
        dxhat = dout * gamma
        dx = (inv / count) * (
            count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
        )
        return dx, dgamma, dbeta
    _, x, rmean, inv, gamma, axes = cache
    dbeta = dout.sum(axis=axes)
    dgamma = (dout * (x - rmean) * inv).sum(axis=axes)
    dx = dout * gamma * inv
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# Shape bridges and scalar reductions
# ---------------------------------------------------------------------------

def reshape_forward(x, new_shape):
    new_shape = tuple(int(d) for d in new_shape)
    if x.size != int(np.prod(new_shape)):
        raise DimensionError(f"cannot reshape {x.shape} ({x.size} elements) to {new_shape}")
    return x.reshape(new_shape), (x.shape,)


def reshape_backward(dout, cache):
    (old_shape,) = cache
    return (dout.reshape(old_shape),)


def flatten_forward(x):
    return reshape_forward(x, (x.shape[0], x.size // x.shape[0]))


def log_forward(x):
    if np.any(x <= 0):
        raise DomainError("log requires strictly positive input")
    return np.log(x), (x,)


def log_backward(dout, cache):
    (x,) = cache
    return (dout / x,)


def mean_forward(x):
    return np.asarray(x.mean()), (x.shape, x.size)


def mean_backward(dout, cache):
    shape, size = cache
    return (np.broadcast_to(dout / size, shape).copy(),)


def add_forward(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"add expects matching shapes, got {a.shape} and {b.shape}")
    return a + b, ()


def add_backward(dout, cache):
    return dout, dout


def neg_forward(x):
    return -x, ()


def neg_backward(dout, cache):
    return (-dout,)


def rsub_forward(c, x):
    """c - x for a python scalar c."""
    return c - x, ()


def rsub_backward(dout, cache):
    return (-dout,)
