#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times im2col/col2im on the shapes the two networks actually hit at the
40x40 training size, verifies both backends agree bit-for-bit, and reports
the speedup. Run: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from ctgen import kernels

# (label, N, H, W, C, k, stride) for the hot layers
SHAPES = [
    ("d.conv1 40x40x3 s2", 16, 40, 40, 3, 3, 2),
    ("d.conv2 20x20x256 s1", 16, 20, 20, 256, 3, 1),
    ("d.conv3 20x20x128 s1", 16, 20, 20, 128, 3, 1),
    ("g.tconv2 40x40 of 256ch s2", 16, 40, 40, 256, 3, 2),
    ("g.tconv3 40x40x64 s1", 16, 40, 40, 64, 3, 1),
]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    table = kernels.backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(table)}")
    if "native" not in table:
        print("native backend not built; timing pure only")

    header = f"{'shape':<30} {'op':<7}" + "".join(f" {name:>10}" for name in table)
    print(header + ("   speedup" if len(table) == 2 else ""))
    rng = np.random.default_rng(0)
    for label, n, h, w, c, k, s in SHAPES:
        p = (k - 1) // 2
        x = rng.normal(size=(n, h, w, c))
        cols_shape = table["pure"].im2col(x, k, s, p).shape
        dcols = rng.normal(size=cols_shape)

        results = {}
        for name, mod in table.items():
            results[name] = (
                _time(lambda m=mod: m.im2col(x, k, s, p), args.repeats),
                _time(lambda m=mod: m.col2im(dcols, n, h, w, c, k, s, p), args.repeats),
            )
        if len(table) == 2:
            a = table["pure"].im2col(x, k, s, p)
            b = table["native"].im2col(x, k, s, p)
            assert np.array_equal(a, b), f"im2col mismatch at {label}"
            a = table["pure"].col2im(dcols, n, h, w, c, k, s, p)
            b = table["native"].col2im(dcols, n, h, w, c, k, s, p)
            assert np.array_equal(a, b), f"col2im mismatch at {label}"

        for op_idx, op in enumerate(("im2col", "col2im")):
            row = f"{label:<30} {op:<7}"
            for name in table:
                row += f" {results[name][op_idx] * 1e3:>8.2f}ms"
            if len(table) == 2:
                row += f"   {results['pure'][op_idx] / results['native'][op_idx]:>6.2f}x"
            print(row)
    if len(table) == 2:
        print("bitwise agreement between backends: OK")


if __name__ == "__main__":
    main()
