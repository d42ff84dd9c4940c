"""
Ego-motion sequences over a synthetic scene.

The vehicle pose at frame k+1 is V_{k+1} = V_k · exp(ξ_k), so ξ_k is the
motion expressed in the vehicle frame at k. The temporal warp needs the
point transform X = V_{k+Δt}⁻¹ · V_k, which moves vehicle-frame points
at k into the vehicle frame at k+Δt.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from shared.contracts.scene_contracts import SceneSpec
from src.geometry.camera_rig import CameraRig, rigid_inverse
from src.geometry.se3 import PoseDelta, se3_log
from src.scene.frame import MultiViewFrame
from src.scene.renderer import noise_for, render_views
from src.scene.scene_spec import build_rig, trajectory_poses

logger = logging.getLogger("scene")

MotionLike = Union[PoseDelta, np.ndarray, Sequence[float]]


def _motion_matrix(motion: MotionLike) -> np.ndarray:
    if not isinstance(motion, PoseDelta):
        motion = PoseDelta.from_vector(motion)
    return motion.matrix()


@dataclass
class FrameSequence:
    spec: SceneSpec
    rig: Optional[CameraRig] = None
    cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.rig = self.rig or build_rig(self.spec)
        self.poses = trajectory_poses(self.spec)
        self._noise = noise_for(self.spec)

    def __len__(self) -> int:
        return len(self.poses)

    def deltas(self) -> List[PoseDelta]:
        """Ground-truth vehicle motion ξ_k between frames k and k+1."""
        return [se3_log(rigid_inverse(self.poses[k]) @ self.poses[k + 1]) for k in range(len(self) - 1)]

    def point_transform(self, k: int, dt: int) -> PoseDelta:
        """X for the pair (k, k+dt) as used by the temporal warp."""
        if not (0 <= k < len(self) and 0 <= k + dt < len(self)):
            raise ValueError(f"Frame pair ({k}, {k + dt}) outside sequence of {len(self)} frames")
        return se3_log(rigid_inverse(self.poses[k + dt]) @ self.poses[k])

    def views(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Rendered images (N, 3, H, W) and GT depths (N, 1, H, W) of frame k."""
        if k not in self.cache:
            self.cache[k] = render_views(self.spec, k, self.rig, self._noise)
        return self.cache[k]

    def sample(self, k: int) -> MultiViewFrame:
        """Frame k with its temporal neighbors k−1 and k+1 where they exist."""
        images, depths = self.views(k)
        previous = self.views(k - 1)[0] if k > 0 else None
        following = self.views(k + 1)[0] if k + 1 < len(self) else None
        return MultiViewFrame(images, index=k, previous=previous, next=following, depths=depths)

    def prefetch(self, frames: Iterable[int], n_jobs: int = -1) -> None:
        missing = [k for k in frames if k not in self.cache]
        for k, rendered in zip(missing, render_sequence(self.spec, missing, self.rig, n_jobs)):
            self.cache[k] = rendered


def ego_sequence(
    spec: SceneSpec,
    n_frames: int,
    motion: Union[MotionLike, Sequence[MotionLike]],
) -> FrameSequence:
    """
    Sequence of n_frames starting at the spec's first pose.

    `motion` is one per-frame motion (PoseDelta or 6-vector, rotation
    first) applied at every step, or a list of n_frames − 1 motions.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be positive, got {n_frames}")
    per_frame = not isinstance(motion, PoseDelta) and len(motion) > 0 and (
        isinstance(motion[0], PoseDelta) or np.ndim(motion[0]) == 1
    )
    if not per_frame:
        steps = [_motion_matrix(motion)] * (n_frames - 1)
    else:
        steps = [_motion_matrix(m) for m in motion]
        if len(steps) != n_frames - 1:
            raise ValueError(f"Expected {n_frames - 1} per-frame motions, got {len(steps)}")

    poses = [trajectory_poses(spec)[0]]
    for step in steps:
        poses.append(poses[-1] @ step)
    trajectory = [pose.ravel().tolist() for pose in poses]
    logger.info(f"Ego sequence with {n_frames} frames")
    return FrameSequence(spec.model_copy(update={"trajectory": trajectory}))


def render_sequence(
    spec: SceneSpec,
    frames: Optional[Sequence[int]] = None,
    rig: Optional[CameraRig] = None,
    n_jobs: int = -1,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Render frames in parallel threads; results follow the order of `frames`."""
    rig = rig or build_rig(spec)
    frames = range(len(spec.trajectory)) if frames is None else list(frames)
    noise = noise_for(spec)
    return Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(render_views)(spec, k, rig, noise) for k in frames
    )
