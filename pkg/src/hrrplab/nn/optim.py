"""Adam optimizer and the hard parameter clip used by the WGAN critic."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from hrrplab.nn.autodiff import Tensor


class Adam:
    """Standard Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 2e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_parameters(params: Sequence[Tensor], bound: float) -> None:
    """Clamp every parameter value into [-bound, bound], in place."""
    if bound <= 0:
        raise ValueError("clip bound must be positive")
    for p in params:
        np.clip(p.data, -bound, bound, out=p.data)
