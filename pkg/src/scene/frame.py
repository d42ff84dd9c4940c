from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.tensor.tensor import Tensor


@dataclass
class MultiViewFrame:
    """N synchronized views (N, 3, H, W) at one timestamp plus optional temporal neighbors."""
    images: np.ndarray
    index: int = 0
    previous: Optional[np.ndarray] = None
    next: Optional[np.ndarray] = None
    depths: Optional[np.ndarray] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 4 or self.images.shape[1] != 3:
            raise ValueError(f"Frame images must be (N, 3, H, W), got {self.images.shape}")
        for name in ("previous", "next"):
            other = getattr(self, name)
            if other is not None:
                other = np.asarray(other, dtype=np.float64)
                if other.shape != self.images.shape:
                    raise ValueError(f"{name} views {other.shape} do not match {self.images.shape}")
                setattr(self, name, other)
        if self.depths is not None:
            self.depths = np.asarray(self.depths, dtype=np.float64)
            N, _, H, W = self.images.shape
            if self.depths.shape != (N, 1, H, W):
                raise ValueError(f"Ground-truth depths must be ({N}, 1, {H}, {W}), got {self.depths.shape}")

    @property
    def n_views(self) -> int:
        return self.images.shape[0]

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.images.shape[2], self.images.shape[3]

    @property
    def has_neighbors(self) -> bool:
        return self.previous is not None and self.next is not None

    def neighbor(self, dt: int) -> np.ndarray:
        if dt not in (-1, 1):
            raise ValueError(f"Temporal offset must be -1 or +1, got {dt}")
        views = self.previous if dt == -1 else self.next
        if views is None:
            raise ValueError(f"Frame {self.index} has no neighbor at offset {dt:+d}")
        return views

    def batch(self, views: Optional[np.ndarray] = None) -> Tensor:
        """(1, N, 3, H, W) tensor of the current views, or of `views`."""
        views = self.images if views is None else views
        return Tensor(views[None])
