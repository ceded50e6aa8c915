"""Convolution lowering kernels: compiled core with a pure-NumPy fallback.

The backend is picked once at import time; ``BACKEND`` names the active one.
Both backends produce bit-identical results, so the choice only affects
speed. ``benchmarks/bench_kernels.py`` compares them.
"""

from ctgen.kernels import pure

try:
    from ctgen.kernels import _native
except ImportError:
    _native = None

BACKEND = "native" if _native is not None else "pure"
_impl = _native if _native is not None else pure

im2col = _impl.im2col
col2im = _impl.col2im


def backends():
    """Name -> module map of the available backends."""
    table = {"pure": pure}
    if _native is not None:
        table["native"] = _native
    return table
