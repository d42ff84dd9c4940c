from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from shared.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    AUX_RES_WEIGHT,
    D_MAX,
    FILTER_RATIO,
    FULL_RES_WEIGHT,
    LR_ROUND1,
    LR_ROUND2,
    PHOTO_WEIGHT,
    SFM_WEIGHT_ROUND1,
    SFM_WEIGHT_ROUND2,
    SMOOTH_WEIGHT,
    SSIM_ALPHA,
    default_out_dir,
)
from shared.contracts.scene_contracts import TextureSpec

EvalMode = Literal["scale-aware", "median-scaled"]

# axis-angle then translation; a slow left turn at 5 cm per frame
DEFAULT_MOTION = (0.0, 0.004, 0.0, 0.0, 0.0, 0.05)


class RoundConfig(BaseModel):
    steps: int = Field(default=100, ge=0)
    learning_rate: float = Field(gt=0)
    sfm_weight: float = Field(ge=0)
    filter_ratio: float = Field(default=0.0, ge=0, le=1)


def _default_rounds() -> List[RoundConfig]:
    return [
        RoundConfig(learning_rate=LR_ROUND1, sfm_weight=SFM_WEIGHT_ROUND1, filter_ratio=0.0),
        RoundConfig(learning_rate=LR_ROUND2, sfm_weight=SFM_WEIGHT_ROUND2, filter_ratio=FILTER_RATIO),
    ]


class DataConfig(BaseModel):
    """Synthetic training data: a scene file, or the seeded default scene, driven along `motion`."""
    scene_path: Optional[str] = None
    scene_seed: int = 0
    image_size: Tuple[int, int] = (96, 160)
    n_cameras: int = Field(default=6, ge=2)
    hfov_deg: float = Field(default=75.0, gt=0, lt=180)
    n_boxes: int = Field(default=12, ge=0)
    n_frames: int = Field(default=200, ge=3)
    motion: Tuple[float, float, float, float, float, float] = DEFAULT_MOTION
    texture: TextureSpec = Field(default_factory=TextureSpec)
    eval_stride: int = Field(default=10, ge=1)


class NetworkSettings(BaseModel):
    channels: Tuple[int, int, int, int] = (16, 32, 64, 128)
    decoder_channels: Tuple[int, int, int, int, int] = (8, 16, 16, 32, 64)
    pose_channels: Tuple[int, ...] = (16, 32, 64)
    use_nca: bool = True
    use_neighbor_attention: bool = True
    nca_depth: Literal[1, 3, 5] = 3
    n_heads: int = Field(default=4, ge=1)
    mlp_ratio: int = Field(default=4, ge=1)
    tie_view_embeddings: bool = False
    init_depth: float = 10.0


class TrainConfig(BaseModel):
    rounds: List[RoundConfig] = Field(default_factory=_default_rounds, min_length=1, max_length=2)
    beta1: float = Field(default=ADAM_BETA1, ge=0, lt=1)
    beta2: float = Field(default=ADAM_BETA2, ge=0, lt=1)
    batch_size: int = Field(default=1, ge=1)
    seed: int = 0
    data: DataConfig = Field(default_factory=DataConfig)
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    out_dir: str = Field(default_factory=default_out_dir)

    ssim_alpha: float = Field(default=SSIM_ALPHA, ge=0, le=1)
    photo_weight: float = Field(default=PHOTO_WEIGHT, ge=0)
    full_res_weight: float = Field(default=FULL_RES_WEIGHT, ge=0)
    aux_res_weight: float = Field(default=AUX_RES_WEIGHT, ge=0)
    smooth_weight: float = Field(default=SMOOTH_WEIGHT, ge=0)

    use_spatial_warps: bool = True
    use_sfm: bool = True

    log_every: int = Field(default=10, ge=1)
    checkpoint_every: int = Field(default=0, ge=0)
    n_jobs: int = -1

    @model_validator(mode="after")
    def _check_batch(self) -> "TrainConfig":
        if self.batch_size > self.data.n_frames - 2:
            raise ValueError(f"batch_size {self.batch_size} exceeds the {self.data.n_frames - 2} trainable frames")
        return self

    @property
    def total_steps(self) -> int:
        return sum(r.steps for r in self.rounds)


class EvalRequest(BaseModel):
    checkpoint: str
    data: Optional[DataConfig] = None
    frames: Optional[List[int]] = None
    mode: Optional[EvalMode] = None
    max_depth: float = Field(default=D_MAX, gt=0)
    n_jobs: int = -1


class FlopsRequest(BaseModel):
    image_size: Tuple[int, int] = (96, 160)
    n_views: int = Field(default=6, ge=2)
    channels: Tuple[int, int, int, int] = (16, 32, 64, 128)
    decoder_channels: Tuple[int, int, int, int, int] = (8, 16, 16, 32, 64)
    nca_depth: Literal[1, 3, 5] = 3
    n_heads: int = Field(default=4, ge=1)
    mlp_ratio: int = Field(default=4, ge=1)
    use_neighbor_attention: bool = True


class EvalReport(BaseModel):
    """Metrics per mode, per-view breakdown per mode, and run statistics."""
    checkpoint: str = ""
    metrics: Dict[str, Dict[str, float]]
    per_view: Dict[str, Dict[str, Dict[str, float]]]
    median_ratio: float
    n_frames: int
    n_images: int
    runtime_s: float
    frames: List[int] = Field(default_factory=list)


# =============================================================================
# PRESETS
# =============================================================================

def motivation_preset(**overrides) -> TrainConfig:
    """Temporal warps only: no spatial warps and no SfM loss, so scale is unobservable."""
    rounds = [
        RoundConfig(learning_rate=LR_ROUND1, sfm_weight=0.0, filter_ratio=0.0),
        RoundConfig(learning_rate=LR_ROUND2, sfm_weight=0.0, filter_ratio=0.0),
    ]
    return TrainConfig(rounds=rounds, use_spatial_warps=False, use_sfm=False, **overrides)


def ratio_sweep_presets(ratios=(1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0), **overrides) -> List[TrainConfig]:
    """One config per round-2 filter ratio; ratio 1.0 turns SfM off in round 2."""
    configs = []
    for ratio in ratios:
        rounds = _default_rounds()
        rounds[1] = RoundConfig(
            steps=rounds[1].steps,
            learning_rate=LR_ROUND2,
            sfm_weight=0.0 if ratio >= 1.0 else SFM_WEIGHT_ROUND2,
            filter_ratio=ratio,
        )
        configs.append(TrainConfig(rounds=rounds, **overrides))
    return configs


def global_only_preset(**overrides) -> TrainConfig:
    """Cross-view attention without the neighbor stage."""
    network = NetworkSettings(use_neighbor_attention=False)
    return TrainConfig(network=network, **overrides)


PRESETS = {
    "default": lambda **kw: TrainConfig(**kw),
    "motivation": motivation_preset,
    "global-only": global_only_preset,
}
