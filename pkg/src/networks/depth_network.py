"""
Surround Depth Network
======================
Shared conv encoder applied to every view, NCA modules on the four skip
connections, an upsampling decoder with depth heads at full, 1/4, 1/8 and
1/16 resolution, and a fusion block that merges the heads into the final
depth map.

Images are (B, N, 3, H, W); every depth output is (B, N, 1, h, w).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import logit

from shared.config import D_MAX, D_MIN
from src.nca.config import NcaConfig
from src.nca.nca_module import NcaModule
from src.tensor.functional import interpolate_bilinear
from src.tensor.nn import Conv2d, Module, ModuleDict, ModuleList, trunc_normal
from src.tensor.tensor import Tensor, concat, elu, sigmoid


SKIP_SCALES = ("s4", "s8", "s16", "s32")
HEAD_SCALES = ("full", "1/4", "1/8", "1/16")


class ResolutionError(ValueError):
    pass


def sigmoid_to_depth(s, d_min: float = D_MIN, d_max: float = D_MAX):
    """depth = 1 / (s·(1/d_min − 1/d_max) + 1/d_max); works on Tensors and arrays."""
    lo, hi = 1.0 / d_max, 1.0 / d_min
    return 1.0 / (s * (hi - lo) + lo)


def depth_to_sigmoid(depth, d_min: float = D_MIN, d_max: float = D_MAX):
    lo, hi = 1.0 / d_max, 1.0 / d_min
    return (1.0 / depth - lo) / (hi - lo)


@dataclass
class DepthNetworkConfig:
    image_size: Tuple[int, int] = (96, 160)
    n_views: int = 6
    channels: Tuple[int, ...] = (16, 32, 64, 128)
    # full, 1/2, 1/4, 1/8, 1/16
    decoder_channels: Tuple[int, ...] = (8, 16, 16, 32, 64)
    d_min: float = D_MIN
    d_max: float = D_MAX
    init_depth: float = 10.0
    use_nca: bool = True
    nca: Optional[NcaConfig] = None

    def __post_init__(self):
        self.image_size = tuple(int(s) for s in self.image_size)
        self.channels = tuple(int(c) for c in self.channels)
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        H, W = self.image_size
        if H % 32 or W % 32 or H <= 0 or W <= 0:
            raise ResolutionError(f"Image size {H}x{W} must be a positive multiple of 32")
        if len(self.channels) != 4 or len(self.decoder_channels) != 5:
            raise ValueError("Expected 4 encoder and 5 decoder channel counts")
        if not 0 < self.d_min < self.init_depth < self.d_max:
            raise ValueError(f"Need 0 < d_min < init_depth < d_max, got {self.d_min}, {self.init_depth}, {self.d_max}")
        if self.n_views < 2:
            raise ValueError(f"Need at least 2 views, got {self.n_views}")
        if isinstance(self.nca, dict):
            self.nca = NcaConfig(**self.nca)
        if self.nca is None:
            self.nca = NcaConfig.for_input(self.image_size)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DepthNetworkConfig":
        return cls(**data)


@dataclass
class DepthOutput:
    """Fused final depth plus each head's depth at its native resolution."""
    final: Tensor
    heads: Dict[str, Tensor] = field(default_factory=dict)
    image_size: Tuple[int, int] = (0, 0)

    def upsampled(self, scale: str) -> Tensor:
        depth = self.heads[scale]
        B, N, _, h, w = depth.shape
        return interpolate_bilinear(depth.reshape(B * N, 1, h, w), self.image_size).reshape(B, N, 1, *self.image_size)

    def loss_depths(self) -> List[Tensor]:
        """Full-resolution depths in loss order: fused final, then 1/4, 1/8, 1/16 heads."""
        return [self.final] + [self.upsampled(s) for s in HEAD_SCALES[1:]]


# =============================================================================
# BLOCKS
# =============================================================================

class ConvBlock(Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int = 1, rng=None):
        self.conv = Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return elu(self.conv(x))


class DepthHead(Module):
    """3x3 conv to one channel; the bias starts the sigmoid at init_depth."""

    def __init__(self, in_channels: int, init_sigmoid: float, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv = Conv2d(in_channels, 1, 3, padding=1, rng=rng)
        self.conv.weight.data = trunc_normal(rng, self.conv.weight.shape)
        self.conv.bias.data = np.full(1, logit(init_sigmoid))

    def forward(self, x: Tensor) -> Tensor:
        return sigmoid(self.conv(x))


class Encoder(Module):
    """Four strided stages producing 1/4, 1/8, 1/16 and 1/32 features."""

    def __init__(self, channels: Tuple[int, ...], rng=None):
        c0 = channels[0]
        stages = [ModuleList([ConvBlock(3, c0, 2, rng), ConvBlock(c0, c0, 2, rng)])]
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            stages.append(ModuleList([ConvBlock(c_in, c_out, 2, rng), ConvBlock(c_out, c_out, 1, rng)]))
        self.stages = ModuleList(stages)

    def forward(self, x: Tensor) -> List[Tensor]:
        features = []
        for stage in self.stages:
            for block in stage:
                x = block(x)
            features.append(x)
        return features


def _upsample(x: Tensor, size: Tuple[int, int]) -> Tensor:
    return interpolate_bilinear(x, size)


# =============================================================================
# NETWORK
# =============================================================================

class DepthNetwork(Module):
    def __init__(self, config: Optional[DepthNetworkConfig] = None, rng: Optional[np.random.Generator] = None):
        config = config or DepthNetworkConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        H, W = config.image_size
        c = config.channels
        d = config.decoder_channels
        init_s = float(depth_to_sigmoid(config.init_depth, config.d_min, config.d_max))

        self.encoder = Encoder(c, rng)
        self.nca = ModuleDict()
        if config.use_nca:
            for i, key in enumerate(SKIP_SCALES):
                factor = 4 * 2 ** i
                self.nca[key] = NcaModule(c[i], config.n_views, (H // factor, W // factor), config.nca, rng)

        self.decoder = ModuleDict({
            "up16": ConvBlock(c[3] + c[2], d[4], rng=rng),
            "up8": ConvBlock(d[4] + c[1], d[3], rng=rng),
            "up4": ConvBlock(d[3] + c[0], d[2], rng=rng),
            "up2": ConvBlock(d[2], d[1], rng=rng),
            "up1": ConvBlock(d[1], d[0], rng=rng),
        })
        self.heads = ModuleDict({
            "1/16": DepthHead(d[4], init_s, rng),
            "1/8": DepthHead(d[3], init_s, rng),
            "1/4": DepthHead(d[2], init_s, rng),
            "full": DepthHead(d[0], init_s, rng),
        })
        self.fusion = ConvBlock(len(HEAD_SCALES), d[0], rng=rng)
        self.fusion_head = DepthHead(d[0], init_s, rng)

    def forward(self, images: Tensor) -> DepthOutput:
        return depth_forward(images, self)


def depth_forward(images: Tensor, network: DepthNetwork) -> DepthOutput:
    """
    Per-view depth at four resolutions and the fused final depth.

    Auxiliary head outputs enter the fusion block detached, so their
    parameters receive gradient only from their own loss terms.
    """
    config = network.config
    if images.ndim != 5:
        raise ResolutionError(f"Expected (B, N, 3, H, W) images, got {images.shape}")
    B, N, C, H, W = images.shape
    if (H, W) != config.image_size or H % 32 or W % 32:
        raise ResolutionError(f"Network expects {config.image_size} images divisible by 32, got {(H, W)}")

    feats = network.encoder(images.reshape(B * N, C, H, W))
    skips = []
    for key, f in zip(SKIP_SCALES, feats):
        if key in network.nca:
            f = network.nca[key](f.reshape(B, N, *f.shape[1:])).reshape(B * N, *f.shape[1:])
        skips.append(f)

    dec = network.decoder
    x16 = dec["up16"](concat([_upsample(skips[3], skips[2].shape[-2:]), skips[2]], axis=1))
    x8 = dec["up8"](concat([_upsample(x16, skips[1].shape[-2:]), skips[1]], axis=1))
    x4 = dec["up4"](concat([_upsample(x8, skips[0].shape[-2:]), skips[0]], axis=1))
    x2 = dec["up2"](_upsample(x4, (H // 2, W // 2)))
    x1 = dec["up1"](_upsample(x2, (H, W)))

    sig = {
        "full": network.heads["full"](x1),
        "1/4": network.heads["1/4"](x4),
        "1/8": network.heads["1/8"](x8),
        "1/16": network.heads["1/16"](x16),
    }
    fusion_in = [sig["full"]] + [_upsample(sig[s], (H, W)).detach() for s in HEAD_SCALES[1:]]
    fused = network.fusion_head(network.fusion(concat(fusion_in, axis=1)))

    def to_depth(s: Tensor) -> Tensor:
        return sigmoid_to_depth(s, config.d_min, config.d_max).reshape(B, N, 1, *s.shape[-2:])

    return DepthOutput(
        final=to_depth(fused),
        heads={k: to_depth(v) for k, v in sig.items()},
        image_size=(H, W),
    )
