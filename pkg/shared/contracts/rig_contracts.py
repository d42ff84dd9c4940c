from typing import List, Tuple

from pydantic import BaseModel, Field, model_validator


class CameraEntry(BaseModel):
    """One camera of a rig file: intrinsics and camera-to-vehicle extrinsics, row-major."""
    id: int
    K: List[float] = Field(min_length=9, max_length=9)
    R: List[float] = Field(min_length=16, max_length=16)


class RigFile(BaseModel):
    """JSON rig file: cameras, image size [H, W] and ring order of camera ids."""
    cameras: List[CameraEntry] = Field(min_length=2)
    image_size: Tuple[int, int]
    ring: List[int]

    @model_validator(mode="after")
    def _ring_covers_cameras(self) -> "RigFile":
        ids = [c.id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise ValueError(f"Duplicate camera ids: {ids}")
        if sorted(self.ring) != sorted(ids):
            raise ValueError(f"Ring {self.ring} must list every camera id exactly once")
        if min(self.image_size) <= 0:
            raise ValueError(f"Image size must be positive, got {self.image_size}")
        return self
