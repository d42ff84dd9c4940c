"""
Two-round progressive training schedule.

Round 1 supervises with every pseudo-GT point at σ1 = 0.1. Round 2 drops,
per view, the points the current model fits worst and lowers σ1 to 0.005.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from shared.config import FILTER_RATIO, SFM_WEIGHT_ROUND1, SFM_WEIGHT_ROUND2
from src.losses.combine import LossWeights
from src.losses.sfm_loss import SparseDepthTarget, sfm_loss_views
from src.tensor.tensor import Tensor, no_grad

logger = logging.getLogger("sfm")

# 1.0 turns SfM supervision off in round 2
RATIO_SWEEP = (1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0)


@dataclass
class ProgressiveSchedule:
    round: int = 1
    filter_ratio: float = FILTER_RATIO
    sfm_weight_round1: float = SFM_WEIGHT_ROUND1
    sfm_weight_round2: float = SFM_WEIGHT_ROUND2

    def __post_init__(self):
        if self.round not in (1, 2):
            raise ValueError(f"Round must be 1 or 2, got {self.round}")
        if not 0.0 <= self.filter_ratio <= 1.0:
            raise ValueError(f"filter_ratio must lie in [0, 1], got {self.filter_ratio}")

    @property
    def sfm_weight(self) -> float:
        if self.round == 1:
            return self.sfm_weight_round1
        return 0.0 if self.filter_ratio >= 1.0 else self.sfm_weight_round2

    def next_round(self) -> "ProgressiveSchedule":
        return replace(self, round=2)


def drop_count(n_points: int, ratio: float) -> int:
    return int(np.floor(ratio * n_points + 1e-9))


def filter_indices(losses: np.ndarray, ratio: float) -> np.ndarray:
    """Indices kept after dropping the floor(ratio·M) largest losses; ties drop later points first."""
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    if not np.isfinite(losses).all():
        raise ValueError("Per-point losses must be finite to rank them")
    k = drop_count(len(losses), ratio)
    order = np.argsort(losses, kind="stable")
    return np.sort(order[: len(losses) - k])


def filter_matches(
    per_point: Dict[int, np.ndarray],
    target: SparseDepthTarget,
    ratio: float,
) -> Tuple[SparseDepthTarget, Dict[int, np.ndarray]]:
    """Per-view ranking of per-point SfM losses; returns P̂ and the kept indices per view."""
    keep = {}
    for cam, view in target.views.items():
        losses = per_point.get(cam, np.zeros(0))
        if len(losses) != len(view):
            raise ValueError(f"View {cam}: {len(losses)} losses for {len(view)} points")
        keep[cam] = filter_indices(losses, ratio)
    filtered = target.filtered(keep)
    logger.info(f"Filtered pseudo GT: kept {len(filtered)} of {len(target)} points (ratio {ratio:.3f})")
    return filtered, keep


def progressive_step(
    schedule: ProgressiveSchedule,
    target: SparseDepthTarget,
    predictions: Optional[Tensor] = None,
    **weight_overrides,
) -> Tuple[LossWeights, SparseDepthTarget, Optional[Dict[int, np.ndarray]]]:
    """
    Loss weights and SfM target for the current round.

    Round 2 needs `predictions` (N, 1, H, W), the current model's depth for
    the frame the target belongs to; P̂ is ranked from them.
    """
    weights = LossWeights.for_round(schedule.round, sfm=schedule.sfm_weight, **weight_overrides)
    if schedule.round == 1:
        return weights, target, None
    if predictions is None:
        raise ValueError("Round 2 filtering needs the current depth predictions")
    with no_grad():
        _, per_point = sfm_loss_views(predictions, target, cameras=sorted(target.views))
    filtered, keep = filter_matches(per_point, target, schedule.filter_ratio)
    return weights, filtered, keep
