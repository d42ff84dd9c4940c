"""
Two-view linear triangulation and epipolar geometry for ring neighbors.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from src.geometry.camera_rig import CameraRig

MAX_CONDITION = 1e12


class DegenerateRayError(ValueError):
    pass


def projection_matrix(rig: CameraRig, n: int) -> np.ndarray:
    """3x4 matrix mapping homogeneous vehicle points to camera-n pixels."""
    return rig.intrinsics[n] @ rig.vehicle_to_camera(n)[:3]


def skew(x: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -x[2], x[1]], [x[2], 0.0, -x[0]], [-x[1], x[0], 0.0]])


def fundamental_matrix(rig: CameraRig, n: int, m: int) -> np.ndarray:
    """F with x_mᵀ·F·x_n = 0 for corresponding pixels of cameras n and m."""
    T = rig.relative_transform(n, m)
    E = skew(T[:3, 3]) @ T[:3, :3]
    return np.linalg.inv(rig.intrinsics[m]).T @ E @ np.linalg.inv(rig.intrinsics[n])


def epipolar_distance(F: np.ndarray, uv_n: np.ndarray, uv_m: np.ndarray) -> np.ndarray:
    """Pixel distance of each uv_m from the epipolar line of its uv_n; inputs (M, 2)."""
    uv_n = np.atleast_2d(uv_n)
    uv_m = np.atleast_2d(uv_m)
    xn = np.column_stack([uv_n, np.ones(len(uv_n))])
    xm = np.column_stack([uv_m, np.ones(len(uv_m))])
    lines = xn @ F.T
    norm = np.hypot(lines[:, 0], lines[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.abs(np.sum(xm * lines, axis=1)) / norm


def _reproject(P: np.ndarray, X: np.ndarray) -> np.ndarray:
    x = X @ P.T
    return x[:, :2] / x[:, 2:3]


def triangulate_points(
    uv_n: np.ndarray,
    uv_m: np.ndarray,
    rig: CameraRig,
    n: int,
    m: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    DLT triangulation of M correspondences (M, 2) between cameras n and m.

    Returns (depth in camera n, max reprojection residual in pixels over
    both views, well-conditioned flag), each of shape (M,). Rows of the
    design matrix are normalized before the SVD.
    """
    uv_n = np.atleast_2d(np.asarray(uv_n, dtype=np.float64))
    uv_m = np.atleast_2d(np.asarray(uv_m, dtype=np.float64))
    Pn, Pm = projection_matrix(rig, n), projection_matrix(rig, m)
    A = np.stack([
        uv_n[:, :1] * Pn[2] - Pn[0],
        uv_n[:, 1:2] * Pn[2] - Pn[1],
        uv_m[:, :1] * Pm[2] - Pm[0],
        uv_m[:, 1:2] * Pm[2] - Pm[1],
    ], axis=1)
    A /= np.linalg.norm(A, axis=2, keepdims=True)
    _, s, Vt = np.linalg.svd(A)
    Xh = Vt[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = s[:, 0] / s[:, -2]
        ok = (cond <= MAX_CONDITION) & (np.abs(Xh[:, 3]) > 1e-12 * np.linalg.norm(Xh, axis=1))
        X = np.column_stack([Xh[:, :3] / Xh[:, 3:4], np.ones(len(Xh))])
        depth = (X @ rig.vehicle_to_camera(n).T)[:, 2]
        residual = np.maximum(
            np.linalg.norm(_reproject(Pn, X) - uv_n, axis=1),
            np.linalg.norm(_reproject(Pm, X) - uv_m, axis=1),
        )
    return depth, residual, ok


def triangulate(
    uv_n: Tuple[float, float],
    uv_m: Tuple[float, float],
    rig: CameraRig,
    n: int,
    m: int,
) -> Tuple[float, float]:
    """Depth in camera n and max reprojection residual (px) for one match."""
    if n == m:
        raise DegenerateRayError(f"Cannot triangulate camera {n} against itself")
    depth, residual, ok = triangulate_points(np.array([uv_n]), np.array([uv_m]), rig, n, m)
    if not ok[0]:
        raise DegenerateRayError(f"Rays from cameras {n} and {m} are degenerate for match {uv_n} <-> {uv_m}")
    return float(depth[0]), float(residual[0])
