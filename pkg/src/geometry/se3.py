"""
SE(3) exponential and logarithm.

A PoseDelta (axis-angle w, translation u) maps to the rigid transform
[[R, V·u], [0, 1]] with R = I + A·[w]x + B·[w]x² and V = I + B·[w]x + C·[w]x²,
A = sinθ/θ, B = (1 − cosθ)/θ², C = (θ − sinθ)/θ³. Below SMALL_ANGLE the
coefficients come from their Taylor series so the map stays smooth at 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial.transform import Rotation

from src.tensor.tensor import Tensor, as_tensor, concat, cos, matmul, sin, stack, where

SMALL_ANGLE = 1e-3


@dataclass
class PoseDelta:
    axis_angle: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.axis_angle = np.asarray(self.axis_angle, dtype=np.float64).reshape(3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.axis_angle).all() and np.isfinite(self.translation).all()):
            raise ValueError("PoseDelta components must be finite")
        if np.linalg.norm(self.axis_angle) > np.pi + 1e-12:
            raise ValueError(f"Rotation angle {np.linalg.norm(self.axis_angle):.6f} exceeds pi")

    @classmethod
    def identity(cls) -> "PoseDelta":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, vec) -> "PoseDelta":
        vec = np.asarray(vec, dtype=np.float64).reshape(6)
        return cls(vec[:3], vec[3:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.axis_angle, self.translation])

    def matrix(self) -> np.ndarray:
        return se3_exp(self).data


def _skew(w: Tensor) -> Tensor:
    """(B, 3) -> (B, 3, 3) cross-product matrices."""
    zero = w[:, 0] * 0.0
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    rows = [
        stack([zero, -wz, wy], axis=-1),
        stack([wz, zero, -wx], axis=-1),
        stack([-wy, wx, zero], axis=-1),
    ]
    return stack(rows, axis=1)


def se3_exp(pose: Union[PoseDelta, Tensor, np.ndarray]) -> Tensor:
    """
    Rigid transform for a 6-vector [axis_angle, translation].

    Accepts a PoseDelta, a (6,) vector or a (B, 6) batch and returns a
    (4, 4) or (B, 4, 4) Tensor, differentiable wrt all six inputs.
    """
    if isinstance(pose, PoseDelta):
        pose = pose.to_vector()
    vec = as_tensor(pose)
    single = vec.ndim == 1
    if single:
        vec = vec.reshape(1, 6)
    B = vec.shape[0]
    w = vec[:, :3]
    u = vec[:, 3:]

    theta2 = (w * w).sum(axis=-1)
    small = theta2.data < SMALL_ANGLE ** 2
    safe2 = where(small, 1.0, theta2)
    theta = safe2 ** 0.5
    s, c = sin(theta), cos(theta)
    t2, t4 = theta2, theta2 * theta2
    A = where(small, 1.0 - t2 / 6.0 + t4 / 120.0, s / theta)
    Bc = where(small, 0.5 - t2 / 24.0 + t4 / 720.0, (1.0 - c) / safe2)
    C = where(small, 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0, (theta - s) / (safe2 * theta))

    K = _skew(w)
    K2 = matmul(K, K)
    eye = Tensor(np.broadcast_to(np.eye(3), (B, 3, 3)).copy())
    R = eye + A.reshape(B, 1, 1) * K + Bc.reshape(B, 1, 1) * K2
    V = eye + Bc.reshape(B, 1, 1) * K + C.reshape(B, 1, 1) * K2
    t = matmul(V, u.reshape(B, 3, 1))
    bottom = Tensor(np.broadcast_to(np.array([0.0, 0.0, 0.0, 1.0]), (B, 1, 4)).copy())
    T = concat([concat([R, t], axis=2), bottom], axis=1)
    return T.reshape(4, 4) if single else T


def se3_log(matrix: np.ndarray) -> PoseDelta:
    """Inverse of se3_exp for a 4x4 rigid transform; rotation angle lands in [0, π]."""
    matrix = np.asarray(matrix, dtype=np.float64)
    w = Rotation.from_matrix(matrix[:3, :3]).as_rotvec()
    theta = np.linalg.norm(w)
    K = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < SMALL_ANGLE:
        Bc, C = 0.5 - theta ** 2 / 24.0, 1.0 / 6.0 - theta ** 2 / 120.0
    else:
        Bc, C = (1.0 - np.cos(theta)) / theta ** 2, (theta - np.sin(theta)) / theta ** 3
    V = np.eye(3) + Bc * K + C * K @ K
    return PoseDelta(w, np.linalg.solve(V, matrix[:3, 3]))
