"""Adam optimizer with exportable state for resumable training."""

from __future__ import annotations

from typing import Any, Dict, Sequence

import numpy as np

from shared.config import ADAM_BETA1, ADAM_BETA2
from src.tensor.nn import Parameter


class Adam:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float,
        betas=(ADAM_BETA1, ADAM_BETA2),
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
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
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            update = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "lr": self.lr,
            "m": [m.copy() for m in self.m],
            "v": [v.copy() for v in self.v],
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        if len(state["m"]) != len(self.params) or len(state["v"]) != len(self.params):
            raise ValueError("Optimizer state does not match parameter count")
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.m = [np.array(m, dtype=p.dtype) for m, p in zip(state["m"], self.params)]
        self.v = [np.array(v, dtype=p.dtype) for v, p in zip(state["v"], self.params)]
