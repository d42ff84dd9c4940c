"""Per-resolution loss combination with round-dependent SfM weight."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

from shared.config import (
    AUX_RES_WEIGHT,
    FULL_RES_WEIGHT,
    PHOTO_WEIGHT,
    SFM_WEIGHT_ROUND1,
    SFM_WEIGHT_ROUND2,
    SMOOTH_WEIGHT,
    SSIM_ALPHA,
)
from src.tensor.tensor import Tensor, as_tensor

RESOLUTIONS = ("full", "1/4", "1/8", "1/16")

LossValue = Union[Tensor, float]


class ResolutionCountError(ValueError):
    pass


@dataclass
class LossWeights:
    a: float = SSIM_ALPHA
    sfm: float = SFM_WEIGHT_ROUND1
    photo: float = PHOTO_WEIGHT
    full_res: float = FULL_RES_WEIGHT
    aux_res: float = AUX_RES_WEIGHT
    smooth: float = SMOOTH_WEIGHT
    round: int = 1

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"SSIM weight a must lie in [0, 1], got {self.a}")
        for name in ("sfm", "photo", "full_res", "aux_res", "smooth"):
            if getattr(self, name) < 0:
                raise ValueError(f"Loss weight '{name}' must be non-negative")
        if self.round not in (1, 2):
            raise ValueError(f"Round must be 1 or 2, got {self.round}")

    @classmethod
    def for_round(cls, round: int, sfm: Optional[float] = None, **overrides) -> "LossWeights":
        if sfm is None:
            sfm = SFM_WEIGHT_ROUND1 if round == 1 else SFM_WEIGHT_ROUND2
        return cls(sfm=sfm, round=round, **overrides)


@dataclass
class ResolutionLosses:
    sfm: LossValue
    photo: LossValue
    smooth: LossValue

    def combined(self, weights: LossWeights) -> Tensor:
        return (
            as_tensor(self.sfm) * weights.sfm
            + as_tensor(self.photo) * weights.photo
            + as_tensor(self.smooth) * weights.smooth
        )


def combine_losses(
    per_resolution: Sequence[Union[ResolutionLosses, Tuple[LossValue, LossValue, LossValue]]],
    weights: LossWeights,
) -> Tensor:
    """
    L_final = p1·L_full + p2·(L_1/4 + L_1/8 + L_1/16), L = σ1·L_sfm + σ2·L_photo + L_smooth.

    `per_resolution` lists (sfm, photo, smooth) in RESOLUTIONS order.
    """
    if len(per_resolution) != len(RESOLUTIONS):
        raise ResolutionCountError(
            f"Expected {len(RESOLUTIONS)} resolutions {RESOLUTIONS}, got {len(per_resolution)}"
        )
    terms = [r if isinstance(r, ResolutionLosses) else ResolutionLosses(*r) for r in per_resolution]
    total = terms[0].combined(weights) * weights.full_res
    for aux in terms[1:]:
        total = total + aux.combined(weights) * weights.aux_res
    return total
