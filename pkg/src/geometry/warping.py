"""
View Synthesis by Warping
=========================
Back-project a target view through its depth, move the points into a
source camera and bilinearly sample the source image there.

Temporal warps use the transform E_n⁻¹·X·E_n, where E_n is the
camera-to-vehicle extrinsic of camera n and X moves vehicle-frame points
from time t to the source frame. Spatial warps use E_m⁻¹·E_n for a ring
neighbor m.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple, Union

import numpy as np

from src.geometry.camera_rig import CameraRig, NonAdjacentCameraError, rigid_inverse
from src.geometry.projection import DepthMap, backproject, project
from src.geometry.se3 import PoseDelta, se3_exp
from src.tensor.functional import grid_sample
from src.tensor.tensor import ShapeMismatchError, Tensor, as_tensor, matmul

logger = logging.getLogger("geometry")


def temporal_transforms(rig: CameraRig, motion: Union[Tensor, np.ndarray], cameras=None) -> Tensor:
    """(N, 4, 4) camera-frame transforms E_n⁻¹·X·E_n for a vehicle-frame point motion X."""
    cameras = range(rig.n_cameras) if cameras is None else cameras
    E = rig.extrinsics[list(cameras)]
    return matmul(matmul(Tensor(rigid_inverse(E)), as_tensor(motion)), Tensor(E))


def warp_views(
    depth: Tensor,
    source: Tensor,
    transform: Union[Tensor, np.ndarray],
    K_target: np.ndarray,
    K_source: Optional[np.ndarray] = None,
) -> Tuple[Tensor, np.ndarray]:
    """
    Synthesize B target views from B source images.

    depth (B, 1, H, W), source (B, C, H, W), transform (B, 4, 4) or (4, 4)
    mapping target-camera points into the source camera, intrinsics (3, 3)
    or (B, 3, 3). Returns (synthesized (B, C, H, W), valid (B, 1, H, W)).
    """
    depth = as_tensor(depth)
    source = as_tensor(source)
    if depth.ndim != 4 or source.ndim != 4 or depth.shape[1] != 1:
        raise ShapeMismatchError(f"warp_views expects (B,1,H,W) depth and (B,C,H,W) source, got {depth.shape}, {source.shape}")
    if depth.shape[0] != source.shape[0] or depth.shape[2:] != source.shape[2:]:
        raise ShapeMismatchError(f"Depth {depth.shape} and source image {source.shape} do not match")
    K_source = K_target if K_source is None else K_source
    B, C, H, W = source.shape

    points = backproject(depth, K_target)
    T = as_tensor(transform)
    moved = matmul(T[..., :3, :3], points) + T[..., :3, 3:]
    coords, in_front = project(moved, K_source)
    values, valid = grid_sample(source, coords, mask=in_front)
    return values.reshape(B, C, H, W), valid.reshape(B, 1, H, W)


def _single_view(depth: Union[DepthMap, Tensor], image: Tensor) -> Tuple[Tensor, Tensor]:
    if isinstance(depth, DepthMap):
        depth = depth.values
    depth = as_tensor(depth)
    image = as_tensor(image)
    if depth.ndim == 2:
        depth = depth.reshape(1, *depth.shape)
    if image.ndim != 3 or depth.shape[-2:] != image.shape[-2:]:
        raise ShapeMismatchError(f"Depth {depth.shape} does not match image {image.shape}")
    return depth.reshape(1, 1, *depth.shape[-2:]), image.reshape(1, *image.shape)


def warp_temporal(
    n: int,
    depth: Union[DepthMap, Tensor],
    pose: Union[PoseDelta, Tensor, np.ndarray],
    source_image: Tensor,
    rig: CameraRig,
) -> Tuple[Tensor, np.ndarray]:
    """Synthesize camera n at time t from its own frame at t+Δt (pose is the point motion X)."""
    d, img = _single_view(depth, source_image)
    transform = temporal_transforms(rig, se3_exp(pose), cameras=[n])
    synth, valid = warp_views(d, img, transform, rig.intrinsics[n])
    return synth.reshape(*synth.shape[1:]), valid[0]


def warp_spatial(
    n: int,
    m: int,
    depth: Union[DepthMap, Tensor],
    source_image: Tensor,
    rig: CameraRig,
) -> Tuple[Tensor, np.ndarray]:
    """Synthesize camera n at time t from ring neighbor m at time t."""
    if not rig.is_adjacent(n, m):
        raise NonAdjacentCameraError(f"Cameras {n} and {m} are not ring neighbors")
    d, img = _single_view(depth, source_image)
    transform = rig.relative_transform(n, m)
    synth, valid = warp_views(d, img, transform, rig.intrinsics[n], rig.intrinsics[m])
    return synth.reshape(*synth.shape[1:]), valid[0]
