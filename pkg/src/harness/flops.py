"""
Analytic multiply-add counts for the depth network and its cross-view modules.

Counts are per timestamp (all N views, batch 1). Attention entries hold the
quadratic score and aggregation products only; the q/kv/proj projections
are listed as linear layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import pandas as pd

from shared.contracts.train_contracts import FlopsRequest
from src.nca.config import NcaConfig
from src.nca.nca_module import downsample_steps
from src.networks.depth_network import SKIP_SCALES, DepthNetworkConfig


@dataclass
class LayerCount:
    name: str
    kind: str
    macs: int


@dataclass
class FlopsReport:
    layers: List[LayerCount] = field(default_factory=list)
    attention: Dict[str, float] = field(default_factory=dict)
    module: Dict[str, float] = field(default_factory=dict)

    @property
    def total_macs(self) -> int:
        return sum(layer.macs for layer in self.layers)

    def by_part(self) -> Dict[str, int]:
        parts: Dict[str, int] = {}
        for layer in self.layers:
            part = layer.name.split(".")[0]
            parts[part] = parts.get(part, 0) + layer.macs
        return parts

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(layer) for layer in self.layers], columns=["name", "kind", "macs"])

    def to_dict(self) -> dict:
        return {
            "total_macs": self.total_macs,
            "total_gflops": 2.0 * self.total_macs / 1e9,
            "by_part": self.by_part(),
            "attention": self.attention,
            "module": self.module,
            "layers": [vars(layer) for layer in self.layers],
        }


def conv_macs(h_out: int, w_out: int, c_in: int, c_out: int, k: int = 3, groups: int = 1) -> int:
    return h_out * w_out * (c_in // groups) * c_out * k * k


def linear_macs(tokens: int, d_in: int, d_out: int) -> int:
    return tokens * d_in * d_out


def attention_macs(n_query: int, n_context: int, dim: int) -> int:
    """QK^T plus attention-weighted V."""
    return 2 * n_query * n_context * dim


# =============================================================================
# CROSS-VIEW MODULES
# =============================================================================

def _neighbor_stage(prefix: str, n_views: int, tokens: int, c: int) -> List[LayerCount]:
    NL, context = n_views * tokens, n_views * 3 * tokens
    return [
        LayerCount(f"{prefix}.q", "linear", linear_macs(NL, c, c)),
        LayerCount(f"{prefix}.kv", "linear", linear_macs(context, c, 2 * c)),
        LayerCount(f"{prefix}.attention", "attention", n_views * attention_macs(tokens, 3 * tokens, c)),
        LayerCount(f"{prefix}.proj", "linear", linear_macs(NL, c, c)),
    ]


def _global_stage(prefix: str, n_views: int, grid: Tuple[int, int], c: int, mlp_ratio: int) -> List[LayerCount]:
    NL = n_views * grid[0] * grid[1]
    hidden = c * mlp_ratio
    return [
        LayerCount(f"{prefix}.q", "linear", linear_macs(NL, c, c)),
        LayerCount(f"{prefix}.kv", "linear", linear_macs(NL, c, 2 * c)),
        LayerCount(f"{prefix}.attention", "attention", attention_macs(NL, NL, c)),
        LayerCount(f"{prefix}.proj", "linear", linear_macs(NL, c, c)),
        LayerCount(f"{prefix}.ffn.fc1", "linear", linear_macs(NL, c, hidden)),
        LayerCount(f"{prefix}.ffn.dwconv", "conv", n_views * conv_macs(*grid, hidden, hidden, 3, groups=hidden)),
        LayerCount(f"{prefix}.ffn.fc2", "linear", linear_macs(NL, hidden, c)),
    ]


def nca_layers(prefix: str, channels: int, size: Tuple[int, int], n_views: int, config: NcaConfig) -> List[LayerCount]:
    """One cross-view module on (N, C, H, W) skip features."""
    c = channels
    grid = config.token_grid
    tokens = grid[0] * grid[1]
    layers = []
    h, w = size
    for i in range(downsample_steps(size, grid)):
        h, w = h // 2, w // 2
        layers.append(LayerCount(f"{prefix}.ds{i}.depthwise", "conv", n_views * conv_macs(h, w, c, c, 3, groups=c)))
        layers.append(LayerCount(f"{prefix}.ds{i}.pointwise", "conv", n_views * conv_macs(h, w, c, c, 1)))
    layers.append(LayerCount(f"{prefix}.embed", "conv", n_views * conv_macs(*grid, c, c, 3)))
    if config.use_neighbor and n_views >= 3:
        layers += _neighbor_stage(f"{prefix}.neighbor", n_views, tokens, c)
    for d in range(config.global_depth):
        layers += _global_stage(f"{prefix}.global{d}", n_views, grid, c, config.mlp_ratio)
    layers.append(LayerCount(f"{prefix}.restore", "conv", n_views * conv_macs(*size, c, c, 3, groups=c)))
    return layers


def _sum(layers: List[LayerCount], kind: str = "") -> int:
    return sum(layer.macs for layer in layers if not kind or layer.kind == kind)


def compare_wiring(channels: int, size: Tuple[int, int], n_views: int, config: NcaConfig) -> Dict[str, Dict[str, float]]:
    """
    NCA against global-only wiring with the same number of attention stages.

    The global-only module replaces the neighbor stage with one more global
    block, so each view attends over all N views instead of its triplet.
    """
    nca = nca_layers("nca", channels, size, n_views, config)
    flat = NcaConfig(
        token_grid=config.token_grid,
        n_heads=config.n_heads,
        global_depth=config.global_depth + 1,
        mlp_ratio=config.mlp_ratio,
        use_neighbor=False,
    )
    global_only = nca_layers("global_only", channels, size, n_views, flat)
    out = {}
    for label, kind in (("attention", "attention"), ("module", "")):
        a, b = _sum(nca, kind), _sum(global_only, kind)
        out[label] = {"nca": a, "global_only": b, "ratio": a / b if b else 0.0}
    return out


# =============================================================================
# DEPTH NETWORK
# =============================================================================

def depth_network_layers(config: DepthNetworkConfig) -> List[LayerCount]:
    N = config.n_views
    H, W = config.image_size
    c, d = config.channels, config.decoder_channels
    layers = [
        LayerCount("encoder.stage0.conv0", "conv", N * conv_macs(H // 2, W // 2, 3, c[0])),
        LayerCount("encoder.stage0.conv1", "conv", N * conv_macs(H // 4, W // 4, c[0], c[0])),
    ]
    for i in range(1, 4):
        h, w = H // 2 ** (i + 2), W // 2 ** (i + 2)
        layers.append(LayerCount(f"encoder.stage{i}.conv0", "conv", N * conv_macs(h, w, c[i - 1], c[i])))
        layers.append(LayerCount(f"encoder.stage{i}.conv1", "conv", N * conv_macs(h, w, c[i], c[i])))

    if config.use_nca:
        for i, key in enumerate(SKIP_SCALES):
            factor = 4 * 2 ** i
            layers += nca_layers(f"nca.{key}", c[i], (H // factor, W // factor), N, config.nca)

    decoder = [
        ("up16", 16, c[3] + c[2], d[4]),
        ("up8", 8, d[4] + c[1], d[3]),
        ("up4", 4, d[3] + c[0], d[2]),
        ("up2", 2, d[2], d[1]),
        ("up1", 1, d[1], d[0]),
    ]
    for name, factor, c_in, c_out in decoder:
        layers.append(LayerCount(f"decoder.{name}", "conv", N * conv_macs(H // factor, W // factor, c_in, c_out)))
    for name, factor, c_in in (("full", 1, d[0]), ("1/4", 4, d[2]), ("1/8", 8, d[3]), ("1/16", 16, d[4])):
        layers.append(LayerCount(f"heads.{name}", "conv", N * conv_macs(H // factor, W // factor, c_in, 1)))
    layers.append(LayerCount("heads.fusion", "conv", N * conv_macs(H, W, 4, d[0])))
    layers.append(LayerCount("heads.fusion_head", "conv", N * conv_macs(H, W, d[0], 1)))
    return layers


def flops_estimate(request: FlopsRequest) -> FlopsReport:
    H, W = request.image_size
    nca = NcaConfig.for_input(
        (H, W),
        n_heads=request.n_heads,
        global_depth=request.nca_depth,
        mlp_ratio=request.mlp_ratio,
        use_neighbor=request.use_neighbor_attention,
    )
    config = DepthNetworkConfig(
        image_size=(H, W),
        n_views=request.n_views,
        channels=request.channels,
        decoder_channels=request.decoder_channels,
        nca=nca,
    )
    report = FlopsReport(layers=depth_network_layers(config))
    attention = {"nca": 0, "global_only": 0}
    module = {"nca": 0, "global_only": 0}
    for i, key in enumerate(SKIP_SCALES):
        factor = 4 * 2 ** i
        wiring = compare_wiring(config.channels[i], (H // factor, W // factor), config.n_views, nca)
        for name in ("nca", "global_only"):
            attention[name] += wiring["attention"][name]
            module[name] += wiring["module"][name]
    report.attention = {**attention, "ratio": attention["nca"] / attention["global_only"]}
    report.module = {**module, "ratio": module["nca"] / module["global_only"]}
    return report
