"""
Neighbor-enhanced Cross-view Attention
======================================
Skip-connection module that exchanges context between surround views.

Per scale: (1) depthwise-separable convs shrink every view to twice the
token grid and a per-view stride-2 embedding lands on the grid, (2) each
view attends over its ring triplet (n-1, n, n+1), (3) all center tokens
pass through global attention + Mix-FFN blocks, (4) tokens are upsampled,
filtered by a depthwise conv and added back onto the input features.

Feature stacks are laid out (B, N, C, H, W).
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from src.nca.attention import GlobalBlock, MultiHeadAttention
from src.nca.config import NcaConfig, NcaResolutionError, NcaViewCountError
from src.tensor.functional import interpolate_bilinear
from src.tensor.nn import ChannelLayerNorm, Conv2d, LayerNorm, Module, ModuleList
from src.tensor.tensor import ShapeMismatchError, Tensor, gelu, stack, transpose

logger = logging.getLogger("nca")


def neighbor_groups(n_views: int, ring: Optional[Sequence[int]] = None) -> np.ndarray:
    """(N, 3) view indices (previous, self, next) around the ring."""
    ring = list(range(n_views)) if ring is None else list(ring)
    if sorted(ring) != list(range(n_views)):
        raise NcaViewCountError(f"Ring {ring} is not a permutation of {n_views} views")
    groups = np.zeros((n_views, 3), dtype=np.int64)
    for i, view in enumerate(ring):
        groups[view] = (ring[i - 1], view, ring[(i + 1) % n_views])
    return groups


def to_tokens(x: Tensor) -> Tensor:
    """(B, N, C, h, w) -> (B, N, h*w, C)"""
    B, N, C, h, w = x.shape
    return transpose(x.reshape(B, N, C, h * w), (0, 1, 3, 2))


def from_tokens(t: Tensor, grid: Tuple[int, int]) -> Tensor:
    B, N, L, C = t.shape
    return transpose(t, (0, 1, 3, 2)).reshape(B, N, C, *grid)


def downsample_steps(size: Tuple[int, int], grid: Tuple[int, int]) -> int:
    """Number of stride-2 depthwise-separable stages before the embedding."""
    (H, W), (Hd, Wd) = size, grid
    if H < Hd or W < Wd or H % Hd or W % Wd or H // Hd != W // Wd:
        raise NcaResolutionError(f"Features {H}x{W} cannot reach token grid {Hd}x{Wd}")
    ratio = H // Hd
    if ratio & (ratio - 1):
        raise NcaResolutionError(f"Reduction {ratio} from {H}x{W} to {Hd}x{Wd} is not a power of two")
    return max(int(np.log2(ratio)) - 1, 0)


# =============================================================================
# STAGES
# =============================================================================

class DepthwiseSeparable(Module):
    def __init__(self, channels: int, rng=None):
        self.depthwise = Conv2d(channels, channels, 3, stride=2, padding=1, groups=channels, rng=rng)
        self.pointwise = Conv2d(channels, channels, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return gelu(self.pointwise(self.depthwise(x)))


class DownsampleEmbed(Module):
    """Shared downsampling, then one k3/s2/p1 embedding per view (stride 1 at the token scale)."""

    def __init__(self, channels: int, n_views: int, size: Tuple[int, int], config: NcaConfig, rng=None):
        n_steps = downsample_steps(size, config.token_grid)
        stride = 1 if size == config.token_grid else 2
        self.size = tuple(size)
        self.token_grid = config.token_grid
        self.n_views = n_views
        self.tied = config.tie_view_embeddings
        self.ds = ModuleList([DepthwiseSeparable(channels, rng) for _ in range(n_steps)])
        n_embed = 1 if self.tied else n_views
        self.embed = ModuleList([Conv2d(channels, channels, 3, stride, 1, rng=rng) for _ in range(n_embed)])
        self.norm = ChannelLayerNorm(channels)

    def forward(self, features: Tensor) -> Tensor:
        B, N, C, H, W = features.shape
        if N != self.n_views:
            raise NcaViewCountError(f"Module built for {self.n_views} views, got {N}")
        if (H, W) != self.size:
            raise NcaResolutionError(f"Module built for {self.size} features, got {(H, W)}")
        x = features.reshape(B * N, C, H, W)
        for stage in self.ds:
            x = stage(x)
        x = x.reshape(B, N, C, *x.shape[-2:])
        if self.tied:
            tokens = self.embed[0](x.reshape(B * N, C, *x.shape[-2:]))
        else:
            per_view = [self.embed[n](x[:, n]) for n in range(N)]
            tokens = transpose(stack(per_view, axis=0), (1, 0, 2, 3, 4)).reshape(B * N, C, *self.token_grid)
        return self.norm(tokens).reshape(B, N, C, *self.token_grid)


class NeighborAttention(Module):
    """One attention block over every ring triplet; only center queries are kept."""

    def __init__(self, channels: int, n_heads: int, rng=None):
        self.norm = LayerNorm(channels)
        self.attn = MultiHeadAttention(channels, n_heads, rng=rng)

    def forward(self, tokens: Tensor, groups: np.ndarray) -> Tensor:
        B, N, L, C = tokens.shape
        if N < 3:
            raise NcaViewCountError(f"Neighbor attention needs at least 3 views, got {N}")
        normed = self.norm(tokens)
        context = normed[:, groups].reshape(B, N, 3 * L, C)
        return tokens + self.attn(normed, context)


class Restore(Module):
    """Bilinear upsample, depthwise conv, residual onto the module input."""

    def __init__(self, channels: int, rng=None):
        self.dwconv = Conv2d(channels, channels, 3, padding=1, groups=channels, bias=False, rng=rng)

    def forward(self, tokens: Tensor, features: Tensor) -> Tensor:
        B, N, C, H, W = features.shape
        up = interpolate_bilinear(tokens.reshape(B * N, C, *tokens.shape[-2:]), (H, W))
        return features + self.dwconv(up).reshape(B, N, C, H, W)


# =============================================================================
# MODULE
# =============================================================================

class NcaModule(Module):
    def __init__(
        self,
        channels: int,
        n_views: int,
        size: Tuple[int, int],
        config: Optional[NcaConfig] = None,
        rng: Optional[np.random.Generator] = None,
    ):
        config = config or NcaConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.n_views = n_views
        self.groups = neighbor_groups(n_views, config.ring)
        self.downsample_embed = DownsampleEmbed(channels, n_views, size, config, rng)
        self.neighbor = None
        if config.use_neighbor and n_views >= 3:
            self.neighbor = NeighborAttention(channels, config.n_heads, rng)
        elif config.use_neighbor:
            logger.info(f"Neighbor stage disabled for {n_views} views; using global attention only")
        self.global_blocks = ModuleList([
            GlobalBlock(channels, n_views, config.n_heads, config.mlp_ratio, config.tie_view_embeddings, rng)
            for _ in range(config.global_depth)
        ])
        self.restore = Restore(channels, rng)

    def forward(self, features: Tensor) -> Tensor:
        return nca_forward(features, self)


def nca_downsample_embed(features: Tensor, module: NcaModule) -> Tensor:
    return module.downsample_embed(features)


def neighbor_attention(tokens: Tensor, module: NcaModule) -> Tensor:
    """(B, N, C, h, w) tokens with each view enhanced by its ring triplet."""
    if module.neighbor is None:
        raise NcaViewCountError("Neighbor stage is not enabled on this module")
    grid = tuple(tokens.shape[-2:])
    return from_tokens(module.neighbor(to_tokens(tokens), module.groups), grid)


def global_attention(tokens: Tensor, module: NcaModule) -> Tensor:
    """All N*h*w center tokens through the global blocks, back in (B, N, C, h, w)."""
    B, N, C, h, w = tokens.shape
    flat = to_tokens(tokens).reshape(B, N * h * w, C)
    for block in module.global_blocks:
        flat = block(flat, (h, w))
    return from_tokens(flat.reshape(B, N, h * w, C), (h, w))


def nca_restore(tokens: Tensor, features: Tensor, module: NcaModule) -> Tensor:
    return module.restore(tokens, features)


def nca_forward(features: Tensor, module: NcaModule) -> Tensor:
    if features.ndim != 5:
        raise ShapeMismatchError(f"NCA expects (B, N, C, H, W) features, got {features.shape}")
    tokens = nca_downsample_embed(features, module)
    if module.neighbor is not None:
        tokens = neighbor_attention(tokens, module)
    tokens = global_attention(tokens, module)
    return nca_restore(tokens, features, module)
