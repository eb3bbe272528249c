"""Adam optimizer with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ShapeMismatch


@dataclass
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    hyper: AdamHyper,
) -> None:
    """One in-place Adam update of ``param`` (and moments) at step t >= 1."""
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise ShapeMismatch(
            f"parameter/gradient/state shapes differ: {param.shape} vs {grad.shape}"
        )
    m *= hyper.beta1
    m += (1.0 - hyper.beta1) * grad
    v *= hyper.beta2
    v += (1.0 - hyper.beta2) * grad * grad
    m_hat = m / (1.0 - hyper.beta1**t)
    v_hat = v / (1.0 - hyper.beta2**t)
    param -= hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)


@dataclass
class Adam:
    """Keeps per-parameter moment state keyed by parameter name."""

    hyper: AdamHyper = field(default_factory=AdamHyper)
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            adam_step(p, grads[name], self.m[name], self.v[name], self.t, self.hyper)
