"""
Camera Rig
==========
Per-camera intrinsics K^n, camera-to-vehicle extrinsics and the ring
adjacency of a surround rig. The vehicle frame has x right, y down and
z forward; ring cameras are yawed about the y axis.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from shared.contracts.rig_contracts import CameraEntry, RigFile

logger = logging.getLogger("geometry")

ORTHONORMAL_TOL = 1e-9


class RigValidationError(ValueError):
    pass


class NonAdjacentCameraError(ValueError):
    pass


def rigid_inverse(T: np.ndarray) -> np.ndarray:
    """Inverse of one or a stack of 4x4 rigid transforms."""
    R = T[..., :3, :3]
    t = T[..., :3, 3:]
    Rt = np.swapaxes(R, -1, -2)
    inv = np.zeros_like(T)
    inv[..., :3, :3] = Rt
    inv[..., :3, 3:] = -Rt @ t
    inv[..., 3, 3] = 1.0
    return inv


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation about the vehicle y (down) axis; yaw 0 looks along +z."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass
class CameraRig:
    intrinsics: np.ndarray
    extrinsics: np.ndarray
    image_size: Tuple[int, int]
    ring: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.intrinsics = np.asarray(self.intrinsics, dtype=np.float64)
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64)
        self.image_size = tuple(int(s) for s in self.image_size)
        n = self.intrinsics.shape[0]
        if not self.ring:
            self.ring = tuple(range(n))
        self.ring = tuple(int(i) for i in self.ring)
        self._validate()

    def _validate(self) -> None:
        n = self.n_cameras
        if n < 2:
            raise RigValidationError(f"A rig needs at least 2 cameras, got {n}")
        if self.intrinsics.shape != (n, 3, 3) or self.extrinsics.shape != (n, 4, 4):
            raise RigValidationError(
                f"Expected intrinsics ({n},3,3) and extrinsics ({n},4,4), "
                f"got {self.intrinsics.shape} and {self.extrinsics.shape}"
            )
        if len(self.image_size) != 2 or min(self.image_size) <= 0:
            raise RigValidationError(f"Invalid image size {self.image_size}")
        for i in range(n):
            R = self.extrinsics[i, :3, :3]
            if np.abs(R.T @ R - np.eye(3)).max() > ORTHONORMAL_TOL:
                raise RigValidationError(f"Camera {i}: rotation block is not orthonormal")
            if not np.allclose(self.extrinsics[i, 3], [0.0, 0.0, 0.0, 1.0], atol=0.0):
                raise RigValidationError(f"Camera {i}: extrinsic bottom row must be [0,0,0,1]")
            K = self.intrinsics[i]
            if K[0, 0] <= 0 or K[1, 1] <= 0:
                raise RigValidationError(f"Camera {i}: focal lengths must be positive")
            if K[0, 1] != 0.0 or K[1, 0] != 0.0 or not np.array_equal(K[2], [0.0, 0.0, 1.0]):
                raise RigValidationError(f"Camera {i}: intrinsics must have zero skew and last row [0,0,1]")
        if sorted(self.ring) != list(range(n)):
            raise RigValidationError(f"Ring {self.ring} must be a single cycle over cameras 0..{n - 1}")

    # ------------------------------------------------------------ adjacency

    @property
    def n_cameras(self) -> int:
        return self.intrinsics.shape[0]

    def ring_neighbor(self, n: int, offset: int) -> int:
        """Camera `offset` steps from `n` along the ring."""
        pos = self.ring.index(n)
        return self.ring[(pos + offset) % self.n_cameras]

    def neighbors(self, n: int) -> Tuple[int, int]:
        return self.ring_neighbor(n, -1), self.ring_neighbor(n, +1)

    def is_adjacent(self, n: int, m: int) -> bool:
        return n != m and m in self.neighbors(n)

    def adjacent_pairs(self) -> List[Tuple[int, int]]:
        """Each ring edge once, as (camera, next camera)."""
        if self.n_cameras == 2:
            return [(self.ring[0], self.ring[1])]
        return [(n, self.ring_neighbor(n, +1)) for n in self.ring]

    # ------------------------------------------------------------ transforms

    def vehicle_to_camera(self, n: int) -> np.ndarray:
        return rigid_inverse(self.extrinsics[n])

    def relative_transform(self, n: int, m: int) -> np.ndarray:
        """Maps camera-n coordinates into camera-m coordinates."""
        return rigid_inverse(self.extrinsics[m]) @ self.extrinsics[n]

    def spatial_transforms(self, offset: int) -> np.ndarray:
        """(N, 4, 4) transforms from each camera to its ring neighbor at `offset`."""
        return np.stack([self.relative_transform(n, self.ring_neighbor(n, offset)) for n in range(self.n_cameras)])

    def baseline(self, n: int, m: int) -> float:
        return float(np.linalg.norm(self.extrinsics[n, :3, 3] - self.extrinsics[m, :3, 3]))

    # ----------------------------------------------------------------- I/O

    def to_file_model(self) -> RigFile:
        return RigFile(
            cameras=[
                CameraEntry(id=i, K=self.intrinsics[i].ravel().tolist(), R=self.extrinsics[i].ravel().tolist())
                for i in range(self.n_cameras)
            ],
            image_size=self.image_size,
            ring=list(self.ring),
        )

    @classmethod
    def from_file_model(cls, model: RigFile) -> "CameraRig":
        order = sorted(model.cameras, key=lambda c: c.id)
        index = {c.id: i for i, c in enumerate(order)}
        return cls(
            intrinsics=np.array([np.reshape(c.K, (3, 3)) for c in order]),
            extrinsics=np.array([np.reshape(c.R, (4, 4)) for c in order]),
            image_size=model.image_size,
            ring=tuple(index[i] for i in model.ring),
        )


def default_ring_rig(
    n_cameras: int = 6,
    image_size: Tuple[int, int] = (96, 160),
    radius: float = 1.0,
    hfov_deg: float = 75.0,
) -> CameraRig:
    """
    Outward-facing cameras evenly spaced on a horizontal ring.

    Neighbor baseline is 2·radius·sin(π/N); with the default 75° field of
    view and 60° spacing, neighbors overlap by about 15°.
    """
    H, W = image_size
    f = (W / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
    K = np.array([[f, 0.0, (W - 1) / 2.0], [0.0, f, (H - 1) / 2.0], [0.0, 0.0, 1.0]])
    intrinsics, extrinsics = [], []
    for n in range(n_cameras):
        yaw = 2.0 * np.pi * n / n_cameras
        E = np.eye(4)
        E[:3, :3] = yaw_matrix(yaw)
        E[:3, 3] = radius * np.array([np.sin(yaw), 0.0, np.cos(yaw)])
        intrinsics.append(K.copy())
        extrinsics.append(E)
    return CameraRig(np.array(intrinsics), np.array(extrinsics), image_size)


def load_rig(path: Union[str, Path]) -> CameraRig:
    model = RigFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    rig = CameraRig.from_file_model(model)
    logger.info(f"Loaded rig with {rig.n_cameras} cameras from {path}")
    return rig


def save_rig(rig: CameraRig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(rig.to_file_model().model_dump(), indent=2), encoding="utf-8")
    return path
