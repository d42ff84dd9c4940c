from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from shared.contracts.rig_contracts import RigFile

Vec3 = Tuple[float, float, float]

IDENTITY_POSE = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]


class PlaneSpec(BaseModel):
    """Infinite textured plane through `point` with normal `normal` (world frame, meters)."""
    point: Vec3
    normal: Vec3
    tint: Vec3 = (0.8, 0.8, 0.8)

    @field_validator("normal")
    @classmethod
    def _nonzero_normal(cls, v: Vec3) -> Vec3:
        if np.linalg.norm(v) < 1e-9:
            raise ValueError("Plane normal must be nonzero")
        return v


class BoxSpec(BaseModel):
    """Axis-aligned box given by its min and max corners."""
    min_corner: Vec3
    max_corner: Vec3
    tint: Vec3 = (0.7, 0.7, 0.7)

    @model_validator(mode="after")
    def _ordered_corners(self) -> "BoxSpec":
        if any(lo >= hi for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(f"Box corners {self.min_corner} / {self.max_corner} are not ordered")
        return self


class TextureSpec(BaseModel):
    """Solid value-noise texture: `frequency` lattice cells per meter at the base octave."""
    frequency: float = Field(default=2.0, gt=0)
    octaves: int = Field(default=3, ge=1, le=8)
    persistence: float = Field(default=0.5, gt=0, le=1)
    contrast: float = Field(default=0.7, ge=0, le=1)


class LightSpec(BaseModel):
    """Directional light; `direction` is the direction light travels (world frame, y down)."""
    direction: Vec3 = (-0.3, 1.0, 0.5)
    ambient: float = Field(default=0.35, ge=0, le=1)
    background: float = Field(default=0.0, ge=0, le=1)


class SceneSpec(BaseModel):
    """
    JSON scene file: primitives, rig, trajectory and texture.

    `trajectory` holds one row-major 4x4 vehicle-to-world transform per
    frame. A missing `rig` means the default six-camera ring at
    `image_size`.
    """
    planes: List[PlaneSpec] = Field(default_factory=list)
    boxes: List[BoxSpec] = Field(default_factory=list)
    rig: Optional[RigFile] = None
    image_size: Tuple[int, int] = (96, 160)
    trajectory: List[List[float]] = Field(default_factory=lambda: [list(IDENTITY_POSE)])
    texture: TextureSpec = Field(default_factory=TextureSpec)
    light: LightSpec = Field(default_factory=LightSpec)
    seed: int = 0

    @model_validator(mode="after")
    def _check_scene(self) -> "SceneSpec":
        if not self.planes and not self.boxes:
            raise ValueError("A scene needs at least one primitive")
        if not self.trajectory:
            raise ValueError("Trajectory must hold at least one pose")
        for k, pose in enumerate(self.trajectory):
            if len(pose) != 16:
                raise ValueError(f"Trajectory pose {k} must have 16 entries, got {len(pose)}")
            T = np.reshape(pose, (4, 4))
            R = T[:3, :3]
            if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
                raise ValueError(f"Trajectory pose {k} is not a rigid transform")
            if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
                raise ValueError(f"Trajectory pose {k} must end with [0, 0, 0, 1]")
        if self.rig is not None and tuple(self.rig.image_size) != tuple(self.image_size):
            raise ValueError(f"Rig image size {self.rig.image_size} differs from scene image size {self.image_size}")
        return self
