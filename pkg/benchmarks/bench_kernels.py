#!/usr/bin/env python3
"""Throughput comparison of the two convolution kernel backends.

Covers the shapes the classifier actually runs: single-window inference and
batch-32 training for each convolution layer, forward and backward. Run as

    python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from breathlens.nn.kernels import has_compiled_backend, numpy_backend

# (label, batch, in_channels, time, filters, kernel)
SHAPES = [
    ("2d-branch fold  train", 64, 1, 625, 16, 43),
    ("1d-branch       train", 32, 2, 625, 16, 43),
    ("trunk           train", 32, 3, 625, 32, 43),
    ("trunk           infer", 1, 3, 625, 32, 43),
    ("1d-branch       infer", 1, 2, 625, 16, 43),
]


def best_of(fn, reps, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - start) / reps)
    return best


def bench(backend, name):
    rng = np.random.default_rng(0)
    print(f"\n{name}")
    print(f"  {'shape':<24}{'forward':>12}{'grad-data':>12}{'grad-w':>12}{'GFLOP/s fwd':>14}")
    for label, n, c, t, f, k in SHAPES:
        x = np.ascontiguousarray(rng.normal(size=(n, c, t)))
        w = np.ascontiguousarray(rng.normal(size=(f, c, k)))
        b = rng.normal(size=f)
        gy = np.ascontiguousarray(rng.normal(size=(n, f, t)))
        reps = 40 if n == 1 else 8
        fwd = best_of(lambda: backend.conv1d_forward(x, w, b), reps)
        bwd = best_of(lambda: backend.conv1d_backward_data(gy, w), reps)
        gw = best_of(lambda: backend.conv1d_grad_weights(x, gy, k), reps)
        gflops = 2 * n * c * t * f * k / fwd / 1e9
        print(f"  {label:<24}{fwd * 1e3:>10.2f}ms{bwd * 1e3:>10.2f}ms"
              f"{gw * 1e3:>10.2f}ms{gflops:>14.1f}")


def main():
    bench(numpy_backend, "numpy backend (im2col + BLAS GEMM)")
    if has_compiled_backend():
        from breathlens.nn.kernels import _cykernels

        bench(_cykernels, "cython backend (compiled loops)")
    else:
        print("\ncython backend not built; install with a C compiler to compare")


if __name__ == "__main__":
    main()
