"""
Photometric Loss
================
SSIM + L1 appearance loss between a target view and images synthesized
from neighboring views. With several sources, each pixel keeps the
smallest error among the sources that are valid there.
"""

from __future__ import annotations

import logging
from collections import Counter
from typing import Sequence, Union

import numpy as np

from shared.config import SSIM_ALPHA, SSIM_C1, SSIM_C2
from src.tensor.functional import avg_pool2d, pad2d
from src.tensor.tensor import ShapeMismatchError, Tensor, as_tensor, stack, where

logger = logging.getLogger("losses")

DIAGNOSTICS: Counter = Counter()

# error assigned to invalid sources before the per-pixel minimum
_INVALID_ERROR = 1e3


def _as_4d(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 3:
        x = x.reshape(1, *x.shape)
    return x


def ssim(x: Tensor, y: Tensor) -> Tensor:
    """Per-pixel SSIM from 3x3 local statistics (reflect padding); same shape as the inputs."""
    x, y = _as_4d(x), _as_4d(y)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"ssim inputs differ: {x.shape} vs {y.shape}")

    def pool(t):
        return avg_pool2d(pad2d(t, 1, mode="reflect"), 3)

    mu_x, mu_y = pool(x), pool(y)
    sigma_x = pool(x * x) - mu_x * mu_x
    sigma_y = pool(y * y) - mu_y * mu_y
    sigma_xy = pool(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sigma_xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return num / den


def combine_photometric_terms(ssim_map, abs_diff, a: float = SSIM_ALPHA):
    """a·(1 − SSIM)/2 + (1 − a)·|target − synthesized|."""
    return a * (1.0 - ssim_map) / 2.0 + (1.0 - a) * abs_diff


def photometric_error_map(target: Tensor, synthesized: Tensor, a: float = SSIM_ALPHA) -> Tensor:
    """(B, 1, H, W) photometric error averaged over channels."""
    target, synthesized = _as_4d(target), _as_4d(synthesized)
    if target.shape != synthesized.shape:
        raise ShapeMismatchError(f"Target {target.shape} and synthesized {synthesized.shape} differ")
    err = combine_photometric_terms(ssim(target, synthesized), (target - synthesized).abs(), a)
    return err.mean(axis=1, keepdims=True)


def photometric_loss(
    target: Tensor,
    synthesized: Union[Tensor, Sequence[Tensor]],
    mask: Union[np.ndarray, Sequence[np.ndarray]],
    a: float = SSIM_ALPHA,
) -> Tensor:
    """
    Mean photometric error over pixels where at least one source is valid.

    `synthesized` and `mask` are one source or parallel sequences of
    sources; masks broadcast to (B, 1, H, W). An all-invalid mask yields 0
    and bumps DIAGNOSTICS["empty_mask"].
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"SSIM weight must lie in [0, 1], got {a}")
    if isinstance(synthesized, (Tensor, np.ndarray)):
        synthesized, mask = [synthesized], [mask]
    if len(synthesized) != len(mask):
        raise ShapeMismatchError(f"{len(synthesized)} sources but {len(mask)} masks")
    target = _as_4d(target)
    B, _, H, W = target.shape

    errors, valids = [], []
    for synth, m in zip(synthesized, mask):
        valid = np.broadcast_to(np.asarray(m, dtype=bool).reshape(B, -1, H, W)[:, :1], (B, 1, H, W))
        err = photometric_error_map(target, synth, a)
        errors.append(where(valid, err, _INVALID_ERROR))
        valids.append(valid)
    any_valid = np.logical_or.reduce(valids)
    count = int(any_valid.sum())
    if count == 0:
        DIAGNOSTICS["empty_mask"] += 1
        logger.warning("Photometric loss has an empty mask; contributing 0")
        return Tensor(0.0)

    best = errors[0] if len(errors) == 1 else stack(errors, axis=0).amin(axis=0)
    return where(any_valid, best, 0.0).sum() / float(count)
