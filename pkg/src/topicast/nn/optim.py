"""Adaptive-moment (Adam) optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Update ``params`` (name -> array or Tensor) in place from ``grads``.

    Missing gradients count as zero. Overflowing moments raise
    :class:`NonFiniteError` instead of silently freezing the parameter.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        w = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(w)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        with np.errstate(over="ignore", invalid="ignore"):
            v += (1.0 - beta2) * g * g
        if not (np.isfinite(m).all() and np.isfinite(v).all()):
            raise NonFiniteError(f"optimizer moments for {name} overflowed")
        w -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, params: dict, lr: float = 1e-3):
        self.params = params
        self.lr = lr
        self.state = AdamState()

    def step(self, grads: dict | None = None) -> None:
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state, self.lr)
