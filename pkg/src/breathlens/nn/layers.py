"""Layer primitives: forward passes, exact backward passes, and parameter
initialization.

Conventions: float64 everywhere; batch axis first; channel axis second;
convolutions are stride-1 with symmetric zero same-padding (odd kernels
only), so every feature map keeps the time length of its input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ShapeMismatch
from . import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class Conv1dParams:
    weights: np.ndarray  # (F, C, K)
    bias: np.ndarray  # (F,)

    @classmethod
    def init(cls, rng: np.random.Generator, in_channels: int, out_channels: int,
             kernel_width: int, bias_fill: float = 0.0) -> "Conv1dParams":
        if kernel_width % 2 == 0:
            raise ShapeMismatch("kernel width must be odd for symmetric same-padding")
        fan_in = in_channels * kernel_width
        return cls(
            weights=he_uniform(rng, (out_channels, in_channels, kernel_width), fan_in),
            bias=np.full(out_channels, float(bias_fill)),
        )


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def init(cls, channels: int) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
        )


@dataclass
class DenseParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    @classmethod
    def init(cls, rng: np.random.Generator, in_features: int, out_features: int) -> "DenseParams":
        return cls(
            weights=he_uniform(rng, (out_features, in_features), in_features),
            bias=np.zeros(out_features),
        )


def _check_conv(x: np.ndarray, params: Conv1dParams, expect_ndim: int) -> None:
    if x.ndim != expect_ndim:
        raise ShapeMismatch(f"expected {expect_ndim}-D input, got shape {x.shape}")
    if params.weights.shape[2] % 2 == 0:
        raise ShapeMismatch("kernel width must be odd")
    if x.shape[1] != params.weights.shape[1]:
        raise ShapeMismatch(
            f"input channels {x.shape[1]} != kernel channels {params.weights.shape[1]}"
        )


def conv1d_forward(x: np.ndarray, params: Conv1dParams) -> np.ndarray:
    """(N, C, T) -> (N, F, T)."""
    _check_conv(x, params, 3)
    return kernels.conv1d_forward_raw(
        np.ascontiguousarray(x), np.ascontiguousarray(params.weights), params.bias
    )


def conv1d_backward(
    x: np.ndarray, params: Conv1dParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_weights, grad_bias)."""
    if grad_out.shape != (x.shape[0], params.weights.shape[0], x.shape[2]):
        raise ShapeMismatch(f"grad shape {grad_out.shape} does not match output")
    k = params.weights.shape[2]
    grad_out = np.ascontiguousarray(grad_out)
    weights = np.ascontiguousarray(params.weights)
    grad_x = kernels.conv1d_backward_data_raw(grad_out, weights)
    grad_w, grad_b = kernels.conv1d_grad_weights_raw(np.ascontiguousarray(x), grad_out, k)
    return grad_x, grad_w, grad_b


def conv2d_forward(x: np.ndarray, params: Conv1dParams) -> np.ndarray:
    """Per-variable time convolution: (N, C, D, T) -> (N, F, D, T).

    The kernel spans time only (width x 1), so variables never mix: output
    row d depends only on input row d. Implemented by folding the variable
    axis into the batch axis of the 1-D kernel.
    """
    _check_conv(x, params, 4)
    n, c, d, t = x.shape
    folded = np.ascontiguousarray(x.transpose(0, 2, 1, 3).reshape(n * d, c, t))
    out = conv1d_forward(folded, params)
    f = params.weights.shape[0]
    return out.reshape(n, d, f, t).transpose(0, 2, 1, 3)


def conv2d_backward(
    x: np.ndarray, params: Conv1dParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, c, d, t = x.shape
    f = params.weights.shape[0]
    if grad_out.shape != (n, f, d, t):
        raise ShapeMismatch(f"grad shape {grad_out.shape} does not match output")
    folded_x = np.ascontiguousarray(x.transpose(0, 2, 1, 3).reshape(n * d, c, t))
    folded_g = np.ascontiguousarray(grad_out.transpose(0, 2, 1, 3).reshape(n * d, f, t))
    grad_x, grad_w, grad_b = conv1d_backward(folded_x, params, folded_g)
    return grad_x.reshape(n, d, c, t).transpose(0, 2, 1, 3), grad_w, grad_b


@dataclass
class BatchNormCache:
    train: bool
    x_hat: np.ndarray
    inv_std: np.ndarray  # per channel
    reduce_axes: tuple[int, ...]
    count: int


def batchnorm_forward(
    x: np.ndarray,
    params: BatchNormParams,
    train: bool,
    update_running: bool = True,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> tuple[np.ndarray, BatchNormCache]:
    """Normalize per channel (axis 1) over all other axes.

    Train mode uses biased batch statistics and (optionally) updates the
    running stats in place; infer mode normalizes with the running stats.
    """
    if x.ndim < 2 or x.shape[1] != params.gamma.shape[0]:
        raise ShapeMismatch(
            f"channel axis {x.shape[1] if x.ndim > 1 else None} != {params.gamma.shape[0]}"
        )
    axes = (0,) + tuple(range(2, x.ndim))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)  # biased
        if update_running:
            params.running_mean *= momentum
            params.running_mean += (1.0 - momentum) * mean
            params.running_var *= momentum
            params.running_var += (1.0 - momentum) * var
    else:
        mean = params.running_mean
        var = params.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = params.gamma.reshape(shape) * x_hat + params.beta.reshape(shape)
    count = int(np.prod([x.shape[a] for a in axes]))
    return out, BatchNormCache(train=train, x_hat=x_hat, inv_std=inv_std,
                               reduce_axes=axes, count=count)


def batchnorm_backward(
    cache: BatchNormCache, params: BatchNormParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_gamma, grad_beta)."""
    axes = cache.reduce_axes
    shape = (1, -1) + (1,) * (grad_out.ndim - 2)
    grad_gamma = (grad_out * cache.x_hat).sum(axis=axes)
    grad_beta = grad_out.sum(axis=axes)
    scale = params.gamma.reshape(shape) * cache.inv_std.reshape(shape)
    if not cache.train:
        return grad_out * scale, grad_gamma, grad_beta
    m = cache.count
    grad_x = scale * (
        grad_out
        - grad_beta.reshape(shape) / m
        - cache.x_hat * grad_gamma.reshape(shape) / m
    )
    return grad_x, grad_gamma, grad_beta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(activated: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (activated > 0.0)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over all axes after the channel axis: (N, C, ...) -> (N, C)."""
    if x.ndim < 3:
        raise ShapeMismatch(f"expected at least 3-D input, got shape {x.shape}")
    return x.mean(axis=tuple(range(2, x.ndim)))


def global_avg_pool_backward(x_shape: tuple[int, ...], grad_out: np.ndarray) -> np.ndarray:
    count = int(np.prod(x_shape[2:]))
    shape = grad_out.shape + (1,) * (len(x_shape) - 2)
    return np.broadcast_to(grad_out.reshape(shape) / count, x_shape).copy()


def dense_forward(x: np.ndarray, params: DenseParams) -> np.ndarray:
    """(N, I) -> (N, O)."""
    if x.ndim != 2 or x.shape[1] != params.weights.shape[1]:
        raise ShapeMismatch(f"input shape {x.shape} != weights {params.weights.shape}")
    return x @ params.weights.T + params.bias


def dense_backward(
    x: np.ndarray, params: DenseParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    grad_x = grad_out @ params.weights
    grad_w = grad_out.T @ x
    return grad_x, grad_w, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss and probabilities for a single logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ShapeMismatch("expected a 1-D logit vector")
    if not (0 <= target < logits.shape[0]):
        raise ShapeMismatch(f"target {target} out of range for {logits.shape[0]} classes")
    probs = softmax(logits)
    shifted = logits - logits.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    return float(-log_probs[target]), probs


def softmax_cross_entropy_batch(
    logits: np.ndarray, targets: np.ndarray, class_weights: np.ndarray | None = None
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss, probabilities, and d(loss)/d(logits) for a batch.

    With class weights, the loss is the weighted mean of per-sample losses
    (weights normalized by their batch sum).
    """
    n = logits.shape[0]
    if targets.shape != (n,):
        raise ShapeMismatch("targets must have one entry per batch row")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(log_probs)
    per_sample = -log_probs[np.arange(n), targets]
    if class_weights is None:
        weights = np.full(n, 1.0 / n)
    else:
        w = class_weights[targets]
        weights = w / w.sum()
    loss = float(per_sample @ weights)
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1.0
    grad *= weights[:, None]
    return loss, probs, grad
