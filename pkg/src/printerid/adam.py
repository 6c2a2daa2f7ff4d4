"""Adam with bias correction and iteration-wise learning-rate decay.

The decay schedule is lr_t = lr0 / (1 + decay * t) with t counted per
optimizer step; an optional L2 weight-decay term is available but off by
default.
"""

from __future__ import annotations

import numpy as np

from .errors import PoisonedGradientError
from .layers import Parameter


class Adam:
    def __init__(self, params: list[Parameter], lr0=0.001, decay=0.0005,
                 beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr0 = lr0
        self.decay = decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0

    def step(self):
        """Apply one update; aborts untouched on any non-finite gradient."""
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise PoisonedGradientError(f"non-finite gradient in {p.name}; step aborted")
        self.t += 1
        lr_t = self.lr0 / (1.0 + self.decay * self.t)
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if self.weight_decay != 0.0:
                g = g + self.weight_decay * p.value
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.value -= (lr_t * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.value.dtype, copy=False)
