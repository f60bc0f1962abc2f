from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state: AdamState, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update of ``params`` in place; returns ``params``."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, theta in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


class Adam:
    """Adam bound to a model's configuration; bumps ``model.version`` on each step."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, state: AdamState | None = None):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = state or AdamState()

    @classmethod
    def from_config(cls, config) -> "Adam":
        return cls(config.lr, config.beta1, config.beta2, config.epsilon)

    def step(self, model, grads) -> None:
        adam_step(model.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
        model.version += 1
