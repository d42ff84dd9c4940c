"""Joint-pose network: one ego-motion estimate for the whole rig per frame pair."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from src.geometry.se3 import PoseDelta
from src.networks.depth_network import ConvBlock
from src.tensor.functional import interpolate_bilinear
from src.tensor.nn import Linear, Module, ModuleList
from src.tensor.tensor import Tensor, concat

TRANSLATION_SCALE = 0.01


class PoseNetwork(Module):
    """
    Channel-concatenates all N views of two frames at 1/4 resolution and
    regresses 6 numbers (axis-angle, translation). The head starts at zero,
    so an untrained network predicts the identity motion.
    """

    def __init__(
        self,
        n_views: int,
        image_size: Tuple[int, int],
        channels: Sequence[int] = (16, 32, 64),
        rng: Optional[np.random.Generator] = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_views = n_views
        self.input_size = (max(image_size[0] // 4, 1), max(image_size[1] // 4, 1))
        widths = [6 * n_views] + list(channels)
        self.encoder = ModuleList([ConvBlock(a, b, 2, rng) for a, b in zip(widths[:-1], widths[1:])])
        self.head = Linear(widths[-1], 6, rng=rng)
        self.head.weight.data = np.zeros_like(self.head.weight.data)

    def forward(self, first: Tensor, second: Tensor) -> Tensor:
        """(B, N, 3, H, W) chronologically ordered frames -> (B, 6) motion first -> second."""
        B, N, C, H, W = first.shape
        x = concat([first, second], axis=2).reshape(B * N, 2 * C, H, W)
        x = interpolate_bilinear(x, self.input_size).reshape(B, N * 2 * C, *self.input_size)
        for block in self.encoder:
            x = block(x)
        out = self.head(x.mean(axis=(2, 3)))
        return concat([out[:, :3], out[:, 3:] * TRANSLATION_SCALE], axis=1)


def pose_forward(network: PoseNetwork, target: Tensor, source: Tensor, dt: int) -> Tensor:
    """
    (B, 6) motion taking target-frame points into the source frame.

    The network always sees frames in time order; for dt = -1 the motion
    is the group inverse, exp(-xi) = exp(xi)^-1.
    """
    if dt not in (-1, 1):
        raise ValueError(f"dt must be -1 or +1, got {dt}")
    if dt == 1:
        return network(target, source)
    return -network(source, target)


def to_pose_delta(pose: Tensor, index: int = 0) -> PoseDelta:
    return PoseDelta.from_vector(np.asarray(pose.data)[index])
