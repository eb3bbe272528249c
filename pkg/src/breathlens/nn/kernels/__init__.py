"""Convolution kernel backends.

Two interchangeable implementations of the same two primitives:

* ``numpy_backend`` -- im2col + BLAS GEMM; the default, fastest at training
  batch sizes on machines with a tuned BLAS.
* ``_cykernels``    -- compiled Cython loops; no BLAS dependency, lower
  per-call overhead. Selected with BREATHLENS_KERNEL_BACKEND=cython.

Both are exercised against naive nested-loop references in the test suite
and agree to float64 rounding error; ``benchmarks/bench_kernels.py``
compares their throughput.
"""
from __future__ import annotations

import os

from . import numpy_backend

_requested = os.environ.get("BREATHLENS_KERNEL_BACKEND", "").strip().lower()

if _requested not in ("", "numpy", "cython"):
    raise ImportError(f"unknown BREATHLENS_KERNEL_BACKEND {_requested!r}")

if _requested == "cython":
    try:
        from . import _cykernels as _impl
    except ImportError:
        raise ImportError(
            "BREATHLENS_KERNEL_BACKEND=cython but the compiled extension is "
            "not available; reinstall with a C compiler"
        ) from None
    ACTIVE_BACKEND = "cython"
else:
    _impl = numpy_backend
    ACTIVE_BACKEND = "numpy"

conv1d_forward_raw = _impl.conv1d_forward
conv1d_backward_data_raw = _impl.conv1d_backward_data
conv1d_grad_weights_raw = _impl.conv1d_grad_weights


def has_compiled_backend() -> bool:
    try:
        from . import _cykernels  # noqa: F401
    except ImportError:
        return False
    return True
