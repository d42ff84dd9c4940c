"""
Attention building blocks: multi-head attention, Mix-FFN and the
transformer block used by the global cross-view stage.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from src.tensor.functional import conv2d, softmax
from src.tensor.nn import Conv2d, LayerNorm, Linear, Module
from src.tensor.tensor import ShapeMismatchError, Tensor, concat, gelu, is_grad_enabled, matmul, split, transpose


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(..., L, C) -> (..., h, L, C/h)"""
    *lead, L, C = x.shape
    x = x.reshape(*lead, L, n_heads, C // n_heads)
    k = len(lead)
    return transpose(x, tuple(range(k)) + (k + 1, k, k + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, L, d = x.shape
    k = len(lead)
    x = transpose(x, tuple(range(k)) + (k + 1, k, k + 2))
    return x.reshape(*lead, L, h * d)


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention over the token axis.

    Queries come from `query`, keys and values from `context` (defaults to
    `query`). Leading axes are batch axes. The softmax weights of the last
    recorded call are kept in `last_attention` with shape (..., h, Lq, Lk);
    calls under no_grad leave it untouched, so threaded inference never
    writes it.
    """

    def __init__(self, dim: int, n_heads: int, rng: Optional[np.random.Generator] = None):
        if dim % n_heads:
            raise ShapeMismatchError(f"Channel dim {dim} is not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.scale = (dim // n_heads) ** -0.5
        self.q = Linear(dim, dim, rng=rng)
        self.kv = Linear(dim, 2 * dim, rng=rng)
        self.proj = Linear(dim, dim, rng=rng)
        self.last_attention: Optional[np.ndarray] = None

    def forward(self, query: Tensor, context: Optional[Tensor] = None) -> Tensor:
        context = query if context is None else context
        q = _split_heads(self.q(query), self.n_heads)
        k, v = (_split_heads(t, self.n_heads) for t in split(self.kv(context), 2, axis=-1))
        scores = matmul(q, k.transpose(*range(k.ndim - 2), k.ndim - 1, k.ndim - 2)) * self.scale
        attn = softmax(scores, axis=-1)
        if is_grad_enabled():
            self.last_attention = attn.data
        return self.proj(_merge_heads(matmul(attn, v)))


class MixFFN(Module):
    """
    MLP -> depthwise Conv2d -> GELU -> MLP.

    The conv runs on the (B, N*hidden, H, W) layout, so each view owns its
    own kernels unless `tied`, in which case one kernel set is tiled.
    """

    def __init__(self, dim: int, n_views: int, mlp_ratio: int = 4, tied: bool = False, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden = dim * mlp_ratio
        self.n_views = n_views
        self.hidden = hidden
        self.tied = tied
        self.fc1 = Linear(dim, hidden, rng=rng)
        groups = hidden if tied else n_views * hidden
        self.dwconv = Conv2d(groups, groups, 3, padding=1, groups=groups, rng=rng)
        self.fc2 = Linear(hidden, dim, rng=rng)

    def _conv_weights(self):
        w, b = self.dwconv.weight, self.dwconv.bias
        if not self.tied:
            return w, b
        return concat([w] * self.n_views, axis=0), concat([b] * self.n_views, axis=0)

    def forward(self, tokens: Tensor, grid) -> Tensor:
        B, NL, _ = tokens.shape
        H, W = grid
        N = self.n_views
        if NL != N * H * W:
            raise ShapeMismatchError(f"Mix-FFN expected {N * H * W} tokens, got {NL}")
        h = self.fc1(tokens).reshape(B, N, H, W, self.hidden)
        h = transpose(h, (0, 1, 4, 2, 3)).reshape(B, N * self.hidden, H, W)
        weight, bias = self._conv_weights()
        h = gelu(conv2d(h, weight, bias, 1, 1, N * self.hidden))
        h = transpose(h.reshape(B, N, self.hidden, H, W), (0, 1, 3, 4, 2)).reshape(B, NL, self.hidden)
        return self.fc2(h)


class GlobalBlock(Module):
    """Pre-norm transformer block: attention then Mix-FFN, each with a residual."""

    def __init__(self, dim: int, n_views: int, n_heads: int, mlp_ratio: int = 4, tied: bool = False, rng=None):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, n_heads, rng=rng)
        self.norm2 = LayerNorm(dim)
        self.ffn = MixFFN(dim, n_views, mlp_ratio, tied, rng=rng)

    def forward(self, tokens: Tensor, grid) -> Tensor:
        tokens = tokens + self.attn(self.norm1(tokens))
        return tokens + self.ffn(self.norm2(tokens), grid)


def zero_residual_branches(block: Module) -> None:
    """Zero every output projection so the block passes its input through."""
    for name, p in block.named_parameters():
        if name.endswith(("proj.weight", "proj.bias", "fc2.weight", "fc2.bias")):
            p.data = np.zeros_like(p.data)
