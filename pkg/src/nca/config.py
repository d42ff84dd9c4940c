from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

NCA_DEPTHS = (1, 3, 5)


class NcaResolutionError(ValueError):
    pass


class NcaViewCountError(ValueError):
    pass


@dataclass
class NcaConfig:
    """
    Cross-view attention settings shared by every skip scale.

    token_grid is (H_dw, W_dw), 1/32 of the network input. ring lists the
    camera order around the vehicle; None means views are already in ring
    order. tie_view_embeddings shares every per-view weight across views.
    """
    token_grid: Tuple[int, int] = (3, 5)
    n_heads: int = 4
    global_depth: int = 3
    tie_view_embeddings: bool = False
    use_neighbor: bool = True
    mlp_ratio: int = 4
    ring: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        self.token_grid = tuple(int(s) for s in self.token_grid)
        if len(self.token_grid) != 2 or min(self.token_grid) < 1:
            raise NcaResolutionError(f"Token grid must be two positive sizes, got {self.token_grid}")
        if self.global_depth < 1:
            raise ValueError(f"global_depth must be >= 1, got {self.global_depth}")
        if self.n_heads < 1 or self.mlp_ratio < 1:
            raise ValueError("n_heads and mlp_ratio must be positive")
        if self.ring is not None:
            self.ring = tuple(int(r) for r in self.ring)

    @classmethod
    def for_input(cls, image_size: Tuple[int, int], **kwargs) -> "NcaConfig":
        H, W = image_size
        if H % 32 or W % 32:
            raise NcaResolutionError(f"Input {H}x{W} is not divisible by 32")
        return cls(token_grid=(H // 32, W // 32), **kwargs)
