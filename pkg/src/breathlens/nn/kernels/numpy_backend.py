"""Pure-NumPy convolution kernels (im2col + BLAS GEMM).

The data gradient uses the col2im adjoint (weightsT GEMM then scatter-add
over kernel offsets), which keeps the working set proportional to the input
channel count rather than the filter count.
"""
from __future__ import annotations

import numpy as np


def _columns(x: np.ndarray, kernel_width: int) -> np.ndarray:
    """Zero-padded sliding windows of x (N, C, T) as a (C*K, N*T) matrix.

    Built with K contiguous slice copies so the transpose never degenerates
    into an element-wise gather.
    """
    n, c, t = x.shape
    if kernel_width == 1:
        return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(c, n * t)
    pad = kernel_width // 2
    padded = np.zeros((n, c, t + 2 * pad), dtype=np.float64)
    padded[:, :, pad : pad + t] = x
    cols = np.empty((c, kernel_width, n, t), dtype=np.float64)
    for k in range(kernel_width):
        np.copyto(cols[:, k], padded[:, :, k : k + t].swapaxes(0, 1))
    return cols.reshape(c * kernel_width, n * t)


def conv1d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 same-padding correlation: (N, C, T) -> (N, F, T)."""
    n, c, t = x.shape
    f, _, k = weights.shape
    cols = _columns(x, k)
    out = weights.reshape(f, c * k) @ cols  # (F, N*T)
    return out.reshape(f, n, t).transpose(1, 0, 2) + bias[None, :, None]


def conv1d_backward_data(grad_out: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv1d input: (N, F, T) -> (N, C, T)."""
    n, f, t = grad_out.shape
    _, c, k = weights.shape
    flat = np.ascontiguousarray(grad_out.transpose(1, 0, 2)).reshape(f, n * t)
    gcols = (weights.reshape(f, c * k).T @ flat).reshape(c, k, n, t)
    if k == 1:
        return np.ascontiguousarray(gcols[:, 0].swapaxes(0, 1))
    pad = k // 2
    padded = np.zeros((n, c, t + 2 * pad), dtype=np.float64)
    for kk in range(k):
        padded[:, :, kk : kk + t] += gcols[:, kk].swapaxes(0, 1)
    return padded[:, :, pad : pad + t]


def conv1d_grad_weights(
    x: np.ndarray, grad_out: np.ndarray, kernel_width: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the conv1d output w.r.t. weights and bias."""
    n, c, t = x.shape
    f = grad_out.shape[1]
    cols = _columns(x, kernel_width)
    flat = np.ascontiguousarray(grad_out.transpose(1, 0, 2)).reshape(f, n * t)
    grad_w = flat @ cols.T
    return grad_w.reshape(f, c, kernel_width), grad_out.sum(axis=(0, 2))
