"""Grad-CAM heatmaps at the two designated layers.

The combined explanation comes from the trunk's final convolution (feature
maps over time), the variable-wise explanation from the 2-D branch's first
convolution (feature maps over variable x time). For a target class c and
post-ReLU feature maps A^k, each channel weight is the mean over all map
positions of d(logit_c)/dA^k; the raw map is the ReLU of the weighted
channel sum. Stride-1 same-padding keeps every map at the input's time
length, so no upsampling is needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import BreathClass
from .model import (
    Classification,
    ForwardCache,
    XcmModel,
    backward_batch,
    forward_with_cache,
)
from .nn import CacheMismatch
from .segmentation import SampleWindow


@dataclass(frozen=True)
class Explanation:
    target_class: BreathClass
    combined: np.ndarray  # (T,) in [0, 1]
    per_variable: np.ndarray  # (D, T) in [0, 1]
    raw_combined: np.ndarray  # (T,) >= 0
    raw_per_variable: np.ndarray  # (D, T) >= 0


def _cam(activations: np.ndarray, activation_grads: np.ndarray) -> np.ndarray:
    """Weighted channel sum, ReLU-gated. Channel axis 0; positions are the
    remaining axes."""
    position_axes = tuple(range(1, activations.ndim))
    alphas = activation_grads.mean(axis=position_axes)
    weighted = np.tensordot(alphas, activations, axes=(0, 0))
    return np.maximum(weighted, 0.0)


def _normalize(raw: np.ndarray) -> np.ndarray:
    peak = raw.max()
    if peak <= 0.0:
        return np.zeros_like(raw)
    return raw / peak


def explain(model: XcmModel, cache: ForwardCache, target_class: BreathClass) -> Explanation:
    """Heatmaps for one cached window; ``cache`` must come from
    forward_with_cache on this model."""
    if cache.logits.shape[0] != 1:
        raise CacheMismatch("explanation requires a single-window cache")
    grad_logits = np.zeros_like(cache.logits)
    grad_logits[0, int(target_class)] = 1.0
    _, activation_grads = backward_batch(model, cache, grad_logits)

    raw_per_variable = _cam(cache.b2_act[0], activation_grads["b2_act"][0])
    raw_combined = _cam(cache.trunk_act[0], activation_grads["trunk_act"][0])
    return Explanation(
        target_class=target_class,
        combined=_normalize(raw_combined),
        per_variable=_normalize(raw_per_variable),
        raw_combined=raw_combined,
        raw_per_variable=raw_per_variable,
    )


def explain_for_prediction(
    model: XcmModel, window: SampleWindow | np.ndarray
) -> tuple[Classification, Explanation]:
    """Classify a window and explain the predicted class."""
    classification, cache = forward_with_cache(model, window)
    return classification, explain(model, cache, classification.label)
