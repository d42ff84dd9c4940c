"""
Sparse SfM Supervision
======================
Absolute log-depth error between predicted depth, bilinearly sampled at
the pseudo-ground-truth pixels, and the triangulated depths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.geometry.projection import DepthMap
from src.tensor.functional import grid_sample
from src.tensor.tensor import Tensor, as_tensor

PROVENANCE_FULL = "full"
PROVENANCE_FILTERED = "filtered"


@dataclass
class ViewTarget:
    """Sparse pseudo depth for one camera: pixels (M, 2) as (u, v), depths (M,), weights (M,)."""
    uv: np.ndarray
    depth: np.ndarray
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=np.float64).reshape(-1, 2)
        self.depth = np.asarray(self.depth, dtype=np.float64).reshape(-1)
        self.weight = np.ones(len(self.depth)) if self.weight is None else np.asarray(self.weight, dtype=np.float64).reshape(-1)
        if not (len(self.uv) == len(self.depth) == len(self.weight)):
            raise ValueError("ViewTarget fields must have one entry per point")
        if np.any(self.depth <= 0):
            raise ValueError("Pseudo depths must be positive")
        if np.any(self.weight < 0):
            raise ValueError("Point weights must be non-negative")

    def __len__(self) -> int:
        return len(self.depth)

    def subset(self, keep: np.ndarray) -> "ViewTarget":
        return ViewTarget(self.uv[keep], self.depth[keep], self.weight[keep])


@dataclass
class SparseDepthTarget:
    """Per-view pseudo ground truth, tagged as the full set or a filtered subset."""
    views: Dict[int, ViewTarget] = field(default_factory=dict)
    provenance: str = PROVENANCE_FULL
    image_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.provenance not in (PROVENANCE_FULL, PROVENANCE_FILTERED):
            raise ValueError(f"Unknown provenance '{self.provenance}'")
        if self.image_size is not None:
            H, W = self.image_size
            for n, view in self.views.items():
                u, v = view.uv[:, 0], view.uv[:, 1]
                if np.any((u < 0) | (u > W - 1) | (v < 0) | (v > H - 1)):
                    raise ValueError(f"View {n} has pseudo-GT pixels outside the {H}x{W} raster")

    def __len__(self) -> int:
        return sum(len(v) for v in self.views.values())

    def view(self, n: int) -> ViewTarget:
        return self.views.get(n, ViewTarget(np.zeros((0, 2)), np.zeros(0)))

    def filtered(self, keep: Dict[int, np.ndarray]) -> "SparseDepthTarget":
        return SparseDepthTarget(
            {n: self.view(n).subset(keep[n]) for n in self.views if n in keep},
            provenance=PROVENANCE_FILTERED,
            image_size=self.image_size,
        )


def _sample_depth(pred: Tensor, uv: np.ndarray) -> Tensor:
    """Bilinear depth samples (M,) from a (1, H, W) or (H, W) map."""
    H, W = pred.shape[-2:]
    image = pred.reshape(1, 1, H, W)
    values, _ = grid_sample(image, Tensor(uv.T[None]))
    return values.reshape(-1)


def sfm_loss(pred: Union[DepthMap, Tensor], target: ViewTarget) -> Tuple[Tensor, np.ndarray]:
    """Weighted mean |log pred(u, v) − log z| and the per-point values."""
    if isinstance(pred, DepthMap):
        pred = pred.values
    pred = as_tensor(pred)
    if len(target) == 0:
        return Tensor(0.0), np.zeros(0)
    sampled = _sample_depth(pred, target.uv)
    per_point = (sampled.log() - Tensor(np.log(target.depth))).abs()
    weights = Tensor(target.weight)
    total = float(target.weight.sum())
    if total <= 0:
        return Tensor(0.0), per_point.data.copy()
    return (per_point * weights).sum() / total, per_point.data.copy()


def sfm_loss_views(
    pred: Tensor,
    target: SparseDepthTarget,
    cameras: Optional[Sequence[int]] = None,
) -> Tuple[Tensor, Dict[int, np.ndarray]]:
    """
    SfM loss pooled over all points of all views.

    pred is (N, 1, H, W) indexed by camera. Returns the weighted mean over
    every target point and the per-point losses of each view.
    """
    pred = as_tensor(pred)
    cameras = range(pred.shape[0]) if cameras is None else cameras
    per_view: Dict[int, np.ndarray] = {}
    weighted_sum = None
    total = 0.0
    for n in cameras:
        view = target.view(n)
        if len(view) == 0:
            per_view[n] = np.zeros(0)
            continue
        loss, points = sfm_loss(pred[n], view)
        per_view[n] = points
        w = float(view.weight.sum())
        term = loss * w
        weighted_sum = term if weighted_sum is None else weighted_sum + term
        total += w
    if weighted_sum is None or total <= 0:
        return Tensor(0.0), per_view
    return weighted_sum / total, per_view
