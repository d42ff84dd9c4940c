"""
Synthetic Scene Builder
=======================
Builds, loads and saves scene specs for the renderer:
1. Ground plane under the vehicle
2. Enclosing room so every camera sees a surface
3. Ring of boxes standing on the ground between 5 and 25 meters
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from shared.contracts.scene_contracts import BoxSpec, PlaneSpec, SceneSpec, TextureSpec
from src.geometry.camera_rig import CameraRig, default_ring_rig

logger = logging.getLogger("scene")


# =============================================================================
# CONFIGURATION - default layout
# =============================================================================

GROUND_HEIGHT = 1.6          # ground is +y (down) from the camera ring
ROOM_HALF_SIZE = 30.0
ROOM_TOP = -6.0
ROOM_BOTTOM = 3.0            # below the ground plane, never visible
BOX_RING_RADIUS = (5.0, 25.0)
BOX_HALF_WIDTH = (0.5, 1.5)
BOX_HEIGHT = (1.0, 3.0)
DEFAULT_BOX_COUNT = 12

GROUND_TINT = (0.6, 0.55, 0.5)
ROOM_TINT = (0.75, 0.75, 0.8)


def default_scene(
    seed: int = 0,
    image_size: Tuple[int, int] = (96, 160),
    n_boxes: int = DEFAULT_BOX_COUNT,
    texture: Optional[TextureSpec] = None,
) -> SceneSpec:
    """Ground, room walls and a seeded ring of boxes around the default six-camera rig."""
    rng = np.random.default_rng(seed)
    boxes = [
        BoxSpec(
            min_corner=(-ROOM_HALF_SIZE, ROOM_TOP, -ROOM_HALF_SIZE),
            max_corner=(ROOM_HALF_SIZE, ROOM_BOTTOM, ROOM_HALF_SIZE),
            tint=ROOM_TINT,
        )
    ]
    for _ in range(n_boxes):
        yaw = float(rng.uniform(0.0, 2.0 * np.pi))
        radius = float(rng.uniform(*BOX_RING_RADIUS))
        sx, sz = rng.uniform(*BOX_HALF_WIDTH, size=2).tolist()
        height = float(rng.uniform(*BOX_HEIGHT))
        cx, cz = float(radius * np.sin(yaw)), float(radius * np.cos(yaw))
        boxes.append(BoxSpec(
            min_corner=(cx - sx, GROUND_HEIGHT - height, cz - sz),
            max_corner=(cx + sx, GROUND_HEIGHT, cz + sz),
            tint=tuple(rng.uniform(0.4, 0.9, size=3).tolist()),
        ))
    ground = PlaneSpec(point=(0.0, GROUND_HEIGHT, 0.0), normal=(0.0, -1.0, 0.0), tint=GROUND_TINT)
    return SceneSpec(
        planes=[ground],
        boxes=boxes,
        image_size=image_size,
        texture=texture or TextureSpec(),
        seed=seed,
    )


def build_rig(spec: SceneSpec) -> CameraRig:
    if spec.rig is None:
        return default_ring_rig(n_cameras=6, image_size=tuple(spec.image_size))
    return CameraRig.from_file_model(spec.rig)


def trajectory_poses(spec: SceneSpec) -> np.ndarray:
    """(F, 4, 4) vehicle-to-world transforms."""
    return np.array([np.reshape(pose, (4, 4)) for pose in spec.trajectory], dtype=np.float64)


def load_scene(path: Union[str, Path]) -> SceneSpec:
    spec = SceneSpec.model_validate_json(Path(path).read_text(encoding="utf-8"))
    logger.info(
        f"Loaded scene from {path}: {len(spec.planes)} planes, {len(spec.boxes)} boxes, "
        f"{len(spec.trajectory)} frames"
    )
    return spec


def save_scene(spec: SceneSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(spec.model_dump(mode="json"), indent=2), encoding="utf-8")
    return path
