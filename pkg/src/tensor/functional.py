"""
Differentiable Array Functions
==============================
Convolution, attention primitives, resampling and padding built on the
Tensor type. Ops with a dedicated backward live here; composite ops
(layer_norm, interpolate_bilinear, pad2d) are assembled from Tensor
primitives and differentiate through them.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.tensor.tensor import (
    ShapeMismatchError,
    Tensor,
    _make,
    as_tensor,
    matmul,
    reduce_mean,
)


class InvalidGeometryError(ValueError):
    pass


# =============================================================================
# SOFTMAX / NORMALIZATION
# =============================================================================

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), _backward, "softmax")


def layer_norm(
    x: Tensor,
    weight: Optional[Tensor] = None,
    bias: Optional[Tensor] = None,
    eps: float = 1e-6,
) -> Tensor:
    """Normalize over the last axis to zero mean and unit variance."""
    mu = reduce_mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = reduce_mean(centered * centered, axis=-1, keepdims=True)
    out = centered / (var + eps) ** 0.5
    if weight is not None:
        out = out * weight
    if bias is not None:
        out = out + bias
    return out


# =============================================================================
# CONVOLUTION
# =============================================================================

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """
    2-D cross-correlation over (B, C, H, W) input.

    weight has shape (O, C // groups, kh, kw); groups == C gives a
    depthwise convolution.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    B, C, H, W = x.shape
    O, Cg, kh, kw = weight.shape
    if C % groups or O % groups or Cg != C // groups:
        raise ShapeMismatchError(f"conv2d groups={groups} incompatible with input {C} / weight {weight.shape}")
    Ho = conv_output_size(H, kh, stride, padding)
    Wo = conv_output_size(W, kw, stride, padding)
    if Ho <= 0 or Wo <= 0:
        raise InvalidGeometryError(f"conv2d output size {Ho}x{Wo} is not positive for input {H}x{W}")

    G, Og = groups, O // groups
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    wg = weight.data.reshape(G, Og, Cg, kh, kw)
    h_span = stride * (Ho - 1) + 1
    w_span = stride * (Wo - 1) + 1

    def _window(arr, ky, kx):
        return arr[:, :, ky:ky + h_span:stride, kx:kx + w_span:stride]

    out = np.zeros((B, G, Og, Ho, Wo), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            xs = _window(xp, ky, kx).reshape(B, G, Cg, Ho, Wo)
            out += np.einsum("bgcij,goc->bgoij", xs, wg[:, :, :, ky, kx], optimize=True)
    out = out.reshape(B, O, Ho, Wo)
    if bias is not None:
        out = out + bias.data.reshape(1, O, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def _backward(g):
        gg = g.reshape(B, G, Og, Ho, Wo)
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for ky in range(kh):
                for kx in range(kw):
                    contrib = np.einsum("bgoij,goc->bgcij", gg, wg[:, :, :, ky, kx], optimize=True)
                    _window(gxp, ky, kx)[...] += contrib.reshape(B, C, Ho, Wo)
            gx = gxp[:, :, p:p + H, p:p + W] if p else gxp
        if weight.requires_grad:
            gwg = np.zeros_like(wg)
            for ky in range(kh):
                for kx in range(kw):
                    xs = _window(xp, ky, kx).reshape(B, G, Cg, Ho, Wo)
                    gwg[:, :, :, ky, kx] = np.einsum("bgoij,bgcij->goc", gg, xs, optimize=True)
            gw = gwg.reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    return _make(out, parents, _backward, "conv2d")


# =============================================================================
# PADDING / POOLING / RESAMPLING
# =============================================================================

def _pad_matrix(n: int, before: int, after: int, mode: str, dtype) -> np.ndarray:
    rows = np.arange(-before, n + after)
    m = np.zeros((len(rows), n), dtype=dtype)
    if mode == "reflect":
        if n < 2 or before >= n or after >= n:
            raise InvalidGeometryError(f"reflect padding {before}/{after} too large for size {n}")
        src = np.pad(np.arange(n), (before, after), mode="reflect")
        m[np.arange(len(rows)), src] = 1.0
    elif mode == "constant":
        inside = (rows >= 0) & (rows < n)
        m[np.nonzero(inside)[0], rows[inside]] = 1.0
    else:
        raise ValueError(f"Unknown padding mode: {mode}")
    return m


def pad2d(x: Tensor, pad: Union[int, Sequence[int]], mode: str = "constant") -> Tensor:
    """Pad the last two axes; `pad` is an int or (top, bottom, left, right)."""
    if isinstance(pad, int):
        pad = (pad, pad, pad, pad)
    top, bottom, left, right = pad
    H, W = x.shape[-2:]
    rows = Tensor(_pad_matrix(H, top, bottom, mode, x.dtype))
    cols = Tensor(_pad_matrix(W, left, right, mode, x.dtype).T)
    return matmul(matmul(rows, x), cols)


def avg_pool2d(x: Tensor, kernel: int = 3, stride: int = 1) -> Tensor:
    C = x.shape[1]
    weight = Tensor(np.full((C, 1, kernel, kernel), 1.0 / (kernel * kernel), dtype=x.dtype))
    return conv2d(x, weight, stride=stride, groups=C)


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    if n_out == 1:
        pos = np.zeros(1)
    else:
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 2)
    w = pos - i0
    idx = np.arange(n_out)
    m[idx, i0] = 1.0 - w
    m[idx, i0 + 1] += w
    return m


def interpolate_bilinear(x: Tensor, size: Tuple[int, int]) -> Tensor:
    """
    Resize the last two axes with corner-aligned bilinear interpolation.

    Corner alignment keeps every sample inside the source grid, so inputs
    that are affine in the pixel coordinates are reproduced exactly.
    """
    H, W = x.shape[-2:]
    Ho, Wo = size
    if Ho <= 0 or Wo <= 0:
        raise InvalidGeometryError(f"Interpolation target {size} is not positive")
    if (Ho, Wo) == (H, W):
        return x
    rows = Tensor(_interp_matrix(H, Ho, x.dtype))
    cols = Tensor(_interp_matrix(W, Wo, x.dtype).T)
    return matmul(matmul(rows, x), cols)


def grid_sample(
    image: Tensor,
    coords: Tensor,
    mask: Optional[np.ndarray] = None,
    eps: float = 1e-6,
) -> Tuple[Tensor, np.ndarray]:
    """
    Bilinearly sample `image` (B, C, H, W) at pixel coordinates `coords` (B, 2, P).

    coords[:, 0] is the column (u) and coords[:, 1] the row (v). Samples
    outside the raster, or excluded by `mask`, return 0 with validity 0 and
    pass no gradient. Returns (values (B, C, P), valid (B, P)).
    """
    coords = as_tensor(coords, image)
    if image.ndim != 4 or coords.ndim != 3 or coords.shape[:2] != (image.shape[0], 2):
        raise ShapeMismatchError(f"grid_sample got image {image.shape} and coords {coords.shape}")
    B, C, H, W = image.shape
    P = coords.shape[2]
    u = coords.data[:, 0]
    v = coords.data[:, 1]
    with np.errstate(invalid="ignore"):
        valid = (
            np.isfinite(u) & np.isfinite(v)
            & (u >= -eps) & (u <= W - 1 + eps)
            & (v >= -eps) & (v <= H - 1 + eps)
        )
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool).reshape(B, P)

    uc = np.clip(np.where(valid, u, 0.0), 0.0, W - 1)
    vc = np.clip(np.where(valid, v, 0.0), 0.0, H - 1)
    x0 = np.minimum(np.floor(uc).astype(np.int64), max(W - 2, 0))
    y0 = np.minimum(np.floor(vc).astype(np.int64), max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    wx = uc - x0
    wy = vc - y0

    flat = image.data.reshape(B, C, H * W)
    corners = {
        "00": (y0 * W + x0, (1.0 - wy) * (1.0 - wx)),
        "01": (y0 * W + x1, (1.0 - wy) * wx),
        "10": (y1 * W + x0, wy * (1.0 - wx)),
        "11": (y1 * W + x1, wy * wx),
    }
    vals = {
        k: np.take_along_axis(flat, np.broadcast_to(idx[:, None, :], (B, C, P)), axis=2)
        for k, (idx, _) in corners.items()
    }
    out = sum(w[:, None, :] * vals[k] for k, (_, w) in corners.items())
    out = out * valid[:, None, :]

    def _backward(g):
        gm = g * valid[:, None, :]
        gimg = gcoords = None
        if image.requires_grad:
            base = (np.arange(B)[:, None, None] * C + np.arange(C)[None, :, None]) * (H * W)
            total = np.zeros(B * C * H * W)
            for idx, w in corners.values():
                lin = (base + idx[:, None, :]).ravel()
                total += np.bincount(lin, weights=(gm * w[:, None, :]).ravel(), minlength=total.size)
            gimg = total.reshape(B, C, H, W).astype(image.dtype)
        if coords.requires_grad:
            du = (1.0 - wy)[:, None] * (vals["01"] - vals["00"]) + wy[:, None] * (vals["11"] - vals["10"])
            dv = (1.0 - wx)[:, None] * (vals["10"] - vals["00"]) + wx[:, None] * (vals["11"] - vals["01"])
            gcoords = np.stack([(gm * du).sum(axis=1), (gm * dv).sum(axis=1)], axis=1)
        return gimg, gcoords

    return _make(out.astype(image.dtype), (image, coords), _backward, "grid_sample"), valid
