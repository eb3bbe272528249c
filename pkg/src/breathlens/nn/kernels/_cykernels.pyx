# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels. Loop order keeps each output element owned
by exactly one thread, so results are bit-reproducible regardless of the
thread count."""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] weights, double[::1] bias):
    """Stride-1 same-padding correlation: (N, C, T) -> (N, F, T)."""
    cdef Py_ssize_t n_batch = x.shape[0]
    cdef Py_ssize_t c_in = x.shape[1]
    cdef Py_ssize_t t_len = x.shape[2]
    cdef Py_ssize_t f_out = weights.shape[0]
    cdef Py_ssize_t k_w = weights.shape[2]
    cdef Py_ssize_t pad = k_w // 2

    out_arr = np.empty((n_batch, f_out, t_len), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n, f, t, c, k, src, lo, hi
    cdef double acc

    for n in prange(n_batch, nogil=True, schedule='static'):
        for f in range(f_out):
            for t in range(t_len):
                acc = bias[f]
                lo = pad - t if pad > t else 0
                hi = k_w if t + k_w - pad <= t_len else t_len + pad - t
                for c in range(c_in):
                    for k in range(lo, hi):
                        acc = acc + weights[f, c, k] * x[n, c, t + k - pad]
                out[n, f, t] = acc
    return out_arr


def conv1d_backward_data(double[:, :, ::1] grad_out, double[:, :, ::1] weights):
    """Gradient w.r.t. the conv1d input: (N, F, T) -> (N, C, T)."""
    cdef Py_ssize_t n_batch = grad_out.shape[0]
    cdef Py_ssize_t f_out = grad_out.shape[1]
    cdef Py_ssize_t t_len = grad_out.shape[2]
    cdef Py_ssize_t c_in = weights.shape[1]
    cdef Py_ssize_t k_w = weights.shape[2]
    cdef Py_ssize_t pad = k_w // 2

    gx_arr = np.empty((n_batch, c_in, t_len), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, c, s, f, k, lo, hi
    cdef double acc

    # gx[n, c, s] = sum_{f, k} grad_out[n, f, s + pad - k] * weights[f, c, k]
    for n in prange(n_batch, nogil=True, schedule='static'):
        for c in range(c_in):
            for s in range(t_len):
                acc = 0.0
                lo = s + pad - t_len + 1
                if lo < 0:
                    lo = 0
                hi = s + pad + 1
                if hi > k_w:
                    hi = k_w
                for f in range(f_out):
                    for k in range(lo, hi):
                        acc = acc + grad_out[n, f, s + pad - k] * weights[f, c, k]
                gx[n, c, s] = acc
    return gx_arr


def conv1d_grad_weights(double[:, :, ::1] x, double[:, :, ::1] grad_out, Py_ssize_t kernel_width):
    """Gradients of the conv1d output w.r.t. weights and bias."""
    cdef Py_ssize_t n_batch = x.shape[0]
    cdef Py_ssize_t c_in = x.shape[1]
    cdef Py_ssize_t t_len = x.shape[2]
    cdef Py_ssize_t f_out = grad_out.shape[1]
    cdef Py_ssize_t pad = kernel_width // 2

    gw_arr = np.zeros((f_out, c_in, kernel_width), dtype=np.float64)
    gb_arr = np.zeros(f_out, dtype=np.float64)
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t n, f, t, c, k, lo, hi
    cdef double acc, bacc

    for f in prange(f_out, nogil=True, schedule='static'):
        bacc = 0.0
        for n in range(n_batch):
            for t in range(t_len):
                bacc = bacc + grad_out[n, f, t]
        gb[f] = bacc
        for c in range(c_in):
            for k in range(kernel_width):
                acc = 0.0
                lo = pad - k if pad > k else 0
                hi = t_len + pad - k if k > pad else t_len
                if hi > t_len:
                    hi = t_len
                for n in range(n_batch):
                    for t in range(lo, hi):
                        acc = acc + grad_out[n, f, t] * x[n, c, t + k - pad]
                gw[f, c, k] = acc
    return gw_arr, gb_arr
