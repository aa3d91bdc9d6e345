"""Adam optimizer with bias correction."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from flighttime.nn.tensor import Parameter


class Adam:
    """Bias-corrected Adam; moment estimates live on the parameters."""

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.adam_m *= b1
            p.adam_m += (1.0 - b1) * g
            p.adam_v *= b2
            p.adam_v += (1.0 - b2) * g * g
            m_hat = p.adam_m / bias1
            v_hat = p.adam_v / bias2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params: Iterable[Parameter], lr: float, t: int,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update at step count `t` (t >= 1), for callers managing state."""
    if t < 1:
        raise ValueError("Adam step count starts at 1")
    opt = Adam(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    opt.t = t - 1
    opt.step()
