"""
Ray-Cast Renderer
=================
Renders every camera of a scene spec with exact per-pixel depth.

Rays leave each camera through K⁻¹·[u, v, 1], so the ray parameter at a
hit is the camera-frame depth itself. The nearest primitive wins per ray.
Surfaces carry a solid value-noise texture evaluated at the 3D hit point
and are shaded with a directional Lambertian light, so a surface point
has the same color in every view and at every frame. Rays that hit
nothing within D_MAX return the background color at depth D_MAX.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np

from shared.config import D_MAX, Z_MIN
from shared.contracts.scene_contracts import BoxSpec, PlaneSpec, SceneSpec
from src.geometry.camera_rig import CameraRig
from src.geometry.projection import DepthMap, pixel_grid
from src.scene.frame import MultiViewFrame
from src.scene.scene_spec import build_rig, trajectory_poses

logger = logging.getLogger("scene")

_PARALLEL_EPS = 1e-12


class ValueNoise:
    """Seeded lattice value noise in 3D with quintic interpolation."""

    def __init__(self, seed: int = 0, octaves: int = 1):
        rng = np.random.default_rng(seed)
        perm = rng.permutation(256)
        self._perm = np.concatenate([perm, perm])
        self._values = rng.random(256)
        self._offsets = rng.uniform(0.0, 256.0, size=(octaves, 3))

    @staticmethod
    def fade(t: np.ndarray) -> np.ndarray:
        return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)

    def _lattice(self, ix, iy, iz) -> np.ndarray:
        p = self._perm
        return self._values[p[p[p[ix & 255] + (iy & 255)] + (iz & 255)]]

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Noise in [0, 1] at lattice coordinates (P, 3)."""
        cell = np.floor(points)
        w = self.fade(points - cell)
        i = cell.astype(np.int64)
        out = np.zeros(len(points))
        for dx in (0, 1):
            wx = w[:, 0] if dx else 1.0 - w[:, 0]
            for dy in (0, 1):
                wy = w[:, 1] if dy else 1.0 - w[:, 1]
                for dz in (0, 1):
                    wz = w[:, 2] if dz else 1.0 - w[:, 2]
                    out += wx * wy * wz * self._lattice(i[:, 0] + dx, i[:, 1] + dy, i[:, 2] + dz)
        return out

    def fractal(self, points: np.ndarray, frequency: float, octaves: int, persistence: float) -> np.ndarray:
        """Octave sum normalized back to [0, 1]."""
        total = np.zeros(len(points))
        norm = 0.0
        for o in range(octaves):
            amp = persistence ** o
            total += amp * self.sample(points * frequency * 2.0 ** o + self._offsets[o % len(self._offsets)])
            norm += amp
        return total / norm


def noise_for(spec: SceneSpec) -> ValueNoise:
    return ValueNoise(spec.seed, spec.texture.octaves)


# =============================================================================
# INTERSECTION
# =============================================================================

def intersect_plane(origin: np.ndarray, dirs: np.ndarray, plane: PlaneSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Ray parameters (P,) with inf on a miss and unit normals (P, 3) facing the camera."""
    normal = np.asarray(plane.normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    denom = normal @ dirs
    offset = (np.asarray(plane.point) - origin) @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = offset / denom
    t = np.where((np.abs(denom) > _PARALLEL_EPS) & (t > Z_MIN), t, np.inf)
    facing = np.where(denom[:, None] < 0.0, normal, -normal)
    return t, facing


def intersect_box(origin: np.ndarray, dirs: np.ndarray, box: BoxSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Slab test; a camera inside the box sees its inner walls."""
    lo = np.asarray(box.min_corner, dtype=np.float64)[:, None]
    hi = np.asarray(box.max_corner, dtype=np.float64)[:, None]
    safe = np.where(dirs >= 0.0, np.maximum(dirs, _PARALLEL_EPS), np.minimum(dirs, -_PARALLEL_EPS))
    t1 = (lo - origin[:, None]) / safe
    t2 = (hi - origin[:, None]) / safe
    t_near = np.minimum(t1, t2).max(axis=0)
    t_far = np.maximum(t1, t2).min(axis=0)
    t = np.where(t_near > Z_MIN, t_near, t_far)
    hit = (t_near <= t_far) & (t > Z_MIN)

    point = origin[:, None] + dirs * np.where(hit, t, 0.0)
    face_gap = np.minimum(np.abs(point - lo), np.abs(point - hi))
    axis = np.argmin(face_gap, axis=0)
    cols = np.arange(dirs.shape[1])
    normal = np.zeros((dirs.shape[1], 3))
    normal[cols, axis] = -np.sign(safe[axis, cols])
    return np.where(hit, t, np.inf), normal


# =============================================================================
# RENDERING
# =============================================================================

def cast_view(
    spec: SceneSpec,
    rig: CameraRig,
    vehicle_pose: np.ndarray,
    camera: int,
    noise: Optional[ValueNoise] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Image (3, H, W), depth (H, W) and hit mask (H, W) of one camera."""
    noise = noise or noise_for(spec)
    H, W = rig.image_size
    cam_to_world = vehicle_pose @ rig.extrinsics[camera]
    R, origin = cam_to_world[:3, :3], cam_to_world[:3, 3]
    dirs = R @ (np.linalg.inv(rig.intrinsics[camera]) @ pixel_grid(H, W))

    P = H * W
    best = np.full(P, np.inf)
    normal = np.zeros((P, 3))
    tint = np.zeros((P, 3))
    hits = [(intersect_plane(origin, dirs, p), p.tint) for p in spec.planes]
    hits += [(intersect_box(origin, dirs, b), b.tint) for b in spec.boxes]
    for (t, n), color in hits:
        closer = t < best
        best = np.where(closer, t, best)
        normal[closer] = n[closer]
        tint[closer] = color

    hit = np.isfinite(best) & (best <= D_MAX)
    depth = np.where(hit, best, D_MAX)
    image = np.full((P, 3), spec.light.background)
    if hit.any():
        points = (origin[:, None] + dirs[:, hit] * best[hit]).T
        tex = noise.fractal(points, spec.texture.frequency, spec.texture.octaves, spec.texture.persistence)
        albedo = tint[hit] * (1.0 - spec.texture.contrast + spec.texture.contrast * tex)[:, None]
        light = -np.asarray(spec.light.direction, dtype=np.float64)
        light = light / np.linalg.norm(light)
        lambert = np.clip(normal[hit] @ light, 0.0, None)
        image[hit] = albedo * (spec.light.ambient + (1.0 - spec.light.ambient) * lambert)[:, None]
    return image.T.reshape(3, H, W), depth.reshape(H, W), hit.reshape(H, W)


def render_views(
    spec: SceneSpec,
    frame_index: int,
    rig: Optional[CameraRig] = None,
    noise: Optional[ValueNoise] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """All cameras at one frame: images (N, 3, H, W) and depths (N, 1, H, W)."""
    rig = rig or build_rig(spec)
    poses = trajectory_poses(spec)
    if not 0 <= frame_index < len(poses):
        raise ValueError(f"Frame {frame_index} outside trajectory of {len(poses)} frames")
    noise = noise or noise_for(spec)
    images, depths = [], []
    for n in range(rig.n_cameras):
        image, depth, hit = cast_view(spec, rig, poses[frame_index], n, noise)
        if not hit.any():
            logger.warning(f"Camera {n} sees no primitive at frame {frame_index}; background at {D_MAX} m")
        images.append(image)
        depths.append(depth[None])
    return np.stack(images), np.stack(depths)


def render(
    spec: SceneSpec,
    frame_index: int,
    rig: Optional[CameraRig] = None,
) -> Tuple[MultiViewFrame, List[DepthMap]]:
    images, depths = render_views(spec, frame_index, rig)
    frame = MultiViewFrame(images, index=frame_index, depths=depths)
    return frame, [DepthMap(depths[n], camera_id=n) for n in range(len(depths))]


def uncovered_cameras(spec: SceneSpec, frame_index: int = 0) -> List[int]:
    """Cameras whose every ray misses the scene at the given frame."""
    rig = build_rig(spec)
    pose = trajectory_poses(spec)[frame_index]
    noise = noise_for(spec)
    return [n for n in range(rig.n_cameras) if not cast_view(spec, rig, pose, n, noise)[2].any()]
