"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from src.tensor.tensor import Tensor


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    n_samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    floor: float = 1e-6,
) -> float:
    """
    Compare analytic gradients of the scalar `fn()` against central differences.

    `fn` must rebuild the loss from the current data of `params`. When
    `n_samples` is given, only that many randomly chosen elements per
    parameter are checked. Returns the largest relative error
    |a - n| / max(|a|, |n|, floor).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.grad = None
        p.data = np.array(p.data, dtype=np.float64)
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        indices = np.arange(flat.size)
        if n_samples is not None and n_samples < flat.size:
            indices = rng.choice(flat.size, size=n_samples, replace=False)
        for i in indices:
            original = flat[i]
            flat[i] = original + step
            plus = fn().item()
            flat[i] = original - step
            minus = fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            a = grad.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
    for p in params:
        p.grad = None
    return worst
