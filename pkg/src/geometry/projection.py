"""Pinhole projection and back-projection over batched pixel grids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from shared.config import D_MAX, Z_MIN
from src.tensor.tensor import Tensor, as_tensor, matmul, where


@dataclass
class DepthMap:
    """Metric depth (1, H, W) of one camera."""
    values: Tensor
    camera_id: int
    max_depth: float = D_MAX

    def __post_init__(self):
        self.values = as_tensor(self.values)
        if self.values.ndim == 2:
            self.values = self.values.reshape(1, *self.values.shape)
        if self.values.ndim != 3 or self.values.shape[0] != 1:
            raise ValueError(f"DepthMap values must be (1, H, W), got {self.values.shape}")
        d = self.values.data
        if not (np.all(d > 0) and np.all(d <= self.max_depth)):
            raise ValueError(f"DepthMap values must lie in (0, {self.max_depth}]")

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


def pixel_grid(H: int, W: int) -> np.ndarray:
    """Homogeneous pixel coordinates (3, H·W), row-major, u = column."""
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    return np.stack([u.ravel(), v.ravel(), np.ones(H * W)])


def backproject(depth: Union[DepthMap, Tensor], K: np.ndarray) -> Tensor:
    """
    Camera-frame points for every pixel of a depth map.

    depth is (H, W), (1, H, W) or a batch (B, 1, H, W); K is (3, 3) or
    (B, 3, 3). Returns (3, H·W) for a single map or (B, 3, H·W).
    """
    if isinstance(depth, DepthMap):
        depth = depth.values
    depth = as_tensor(depth)
    single = depth.ndim < 4
    H, W = depth.shape[-2:]
    d = depth.reshape(-1, 1, H * W)
    rays = np.linalg.inv(np.asarray(K, dtype=np.float64)) @ pixel_grid(H, W)
    points = Tensor(rays.astype(d.dtype)) * d
    return points.reshape(3, H * W) if single else points


def project(points: Tensor, K: np.ndarray, z_min: float = Z_MIN) -> Tuple[Tensor, np.ndarray]:
    """
    Pixel coordinates (u, v) = (fx·x/z + cx, fy·y/z + cy).

    points is (3, P) or (B, 3, P). Returns coords of matching rank and a
    boolean validity mask that is False where z ≤ z_min.
    """
    points = as_tensor(points)
    single = points.ndim == 2
    if single:
        points = points.reshape(1, *points.shape)
    z = points[:, 2:3]
    valid = z.data[:, 0] > z_min
    z_safe = where(z.data > z_min, z, 1.0)
    pix = matmul(Tensor(np.asarray(K, dtype=np.float64)), points)
    coords = pix[:, :2] / z_safe
    if single:
        return coords.reshape(*coords.shape[1:]), valid[0]
    return coords, valid
