"""
Image dumps: binary PFM (portable float map) for exact values and 8-bit
PPM for viewing. Arrays are (H, W) or channel-first (3, H, W).
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from shared.config import D_MAX, D_MIN


class ImageFormatError(ValueError):
    pass


def _hwc(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[0] in (1, 3):
        image = np.moveaxis(image, 0, -1)
        if image.shape[-1] == 1:
            image = image[..., 0]
    if image.ndim not in (2, 3) or (image.ndim == 3 and image.shape[-1] != 3):
        raise ImageFormatError(f"Expected (H, W) or (3, H, W) image, got {np.shape(image)}")
    return image


def write_pfm(path: Union[str, Path], image: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _hwc(image).astype("<f4")
    color = data.ndim == 3
    H, W = data.shape[:2]
    header = f"{'PF' if color else 'Pf'}\n{W} {H}\n-1.0\n".encode("ascii")
    # rows are stored bottom to top
    path.write_bytes(header + np.ascontiguousarray(data[::-1]).tobytes())
    return path


def read_pfm(path: Union[str, Path]) -> np.ndarray:
    """Returns (H, W) for grayscale maps and (3, H, W) for color maps."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"PF", b"Pf"):
        raise ImageFormatError(f"{path} is not a PFM file")
    color = parts[0] == b"PF"
    try:
        W, H = (int(s) for s in parts[1].split())
        scale = float(parts[2])
    except ValueError as exc:
        raise ImageFormatError(f"{path} has a malformed PFM header") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    channels = 3 if color else 1
    expected = H * W * channels * 4
    if len(parts[3]) != expected:
        raise ImageFormatError(f"{path}: expected {expected} data bytes, found {len(parts[3])}")
    data = np.frombuffer(parts[3], dtype=dtype).reshape(H, W, channels)[::-1].astype(np.float32)
    return np.moveaxis(data, -1, 0) if color else data[..., 0]


def write_ppm(path: Union[str, Path], image: np.ndarray) -> Path:
    """8-bit binary PPM of an image with values in [0, 1]; grayscale is replicated."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _hwc(image)
    if data.ndim == 2:
        data = np.repeat(data[..., None], 3, axis=-1)
    pixels = np.clip(np.round(np.nan_to_num(data) * 255.0), 0, 255).astype(np.uint8)
    H, W = pixels.shape[:2]
    path.write_bytes(f"P6\n{W} {H}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def depth_to_gray(depth: np.ndarray, d_min: float = D_MIN, d_max: float = D_MAX) -> np.ndarray:
    """Normalized inverse depth in [0, 1]; near is bright."""
    depth = np.clip(np.asarray(depth, dtype=np.float64), d_min, d_max)
    return (1.0 / depth - 1.0 / d_max) / (1.0 / d_min - 1.0 / d_max)
