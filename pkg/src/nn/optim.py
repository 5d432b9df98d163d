"""gradient based optimisation"""
from typing import List, Sequence

import numpy as np

from ..errors import ConfigurationError
from .tensor import Parameter


class Adam:
    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 betas: tuple = (0.9, 0.999), eps: float = 1e-8) -> None:
        """Adam with bias corrected moment estimates

        Args:
            params: parameters to update, frozen ones are skipped
            lr: learning rate, adjustable through `lr`
            betas: decay of the first and second moment estimates
            eps: denominator offset

        Usage:
            >>> opt = Adam(model.trainable_parameters(), lr=1e-3)
            >>> opt.zero_grad(); loss.backward(); opt.step()
        """
        if lr <= 0:
            raise ConfigurationError(f"learning rate must be > 0, got {lr}")
        self.params: List[Parameter] = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for param, m, v in zip(self.params, self._m, self._v):
            if param.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * param.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * param.grad ** 2
            param.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def __repr__(self) -> str:
        return f"<Adam lr={self.lr} steps={self.t}>"
