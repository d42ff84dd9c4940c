"""
Cross-View Matching
===================
Built-in matcher for the overlap between ring neighbors: Harris corners,
11x11 zero-normalized cross-correlation, mutual-best check, ratio test
and an epipolar gate. External matches can be injected through JSON-lines
match files instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from src.geometry.camera_rig import CameraRig, NonAdjacentCameraError
from src.geometry.triangulation import fundamental_matrix
from src.tensor.tensor import Tensor

logger = logging.getLogger("sfm")

Pair = Tuple[int, int]


@dataclass
class MatchParams:
    sigma: float = 1.0
    harris_k: float = 0.04
    nms_size: int = 5
    border: int = 5
    max_corners: int = 400
    rel_threshold: float = 0.01
    patch_size: int = 11
    ratio: float = 0.8
    min_score: float = 0.7
    epipolar_gate: float = 2.0

    def __post_init__(self):
        if self.patch_size % 2 == 0:
            raise ValueError(f"patch_size must be odd, got {self.patch_size}")
        if self.border < self.patch_size // 2:
            raise ValueError("border must keep the whole patch inside the image")
        if not 0 < self.ratio <= 1:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")


@dataclass
class MatchSet:
    """Per camera pair (n, m): rows (u_n, v_n, u_m, v_m, confidence)."""
    pairs: Dict[Pair, np.ndarray] = field(default_factory=dict)
    image_size: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        cleaned = {}
        for (n, m), rows in self.pairs.items():
            if n == m:
                raise ValueError(f"Match pair ({n}, {m}) pairs a camera with itself")
            rows = np.asarray(rows, dtype=np.float64).reshape(-1, 5)
            if self.image_size is not None and len(rows):
                H, W = self.image_size
                u, v = rows[:, [0, 2]], rows[:, [1, 3]]
                if np.any((u < 0) | (u > W - 1) | (v < 0) | (v > H - 1)):
                    raise ValueError(f"Matches for pair ({n}, {m}) fall outside the {H}x{W} raster")
            cleaned[(int(n), int(m))] = rows
        self.pairs = cleaned

    def __len__(self) -> int:
        return sum(len(rows) for rows in self.pairs.values())

    def pair(self, n: int, m: int) -> np.ndarray:
        return self.pairs.get((n, m), np.zeros((0, 5)))

    def check_adjacent(self, rig: CameraRig) -> None:
        for n, m in self.pairs:
            if not rig.is_adjacent(n, m):
                raise NonAdjacentCameraError(f"Match pair ({n}, {m}) is not ring-adjacent")


# =============================================================================
# DETECTION / DESCRIPTION
# =============================================================================

def to_gray(image: Union[np.ndarray, Tensor]) -> np.ndarray:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    return arr.mean(axis=0) if arr.ndim == 3 else arr


def harris_corners(gray: np.ndarray, params: Optional[MatchParams] = None) -> np.ndarray:
    """Integer corner positions (K, 2) as (u, v), strongest first."""
    params = params or MatchParams()
    gx = ndimage.sobel(gray, axis=1)
    gy = ndimage.sobel(gray, axis=0)
    sxx = ndimage.gaussian_filter(gx * gx, params.sigma)
    syy = ndimage.gaussian_filter(gy * gy, params.sigma)
    sxy = ndimage.gaussian_filter(gx * gy, params.sigma)
    response = sxx * syy - sxy * sxy - params.harris_k * (sxx + syy) ** 2

    peak = response == ndimage.maximum_filter(response, size=params.nms_size)
    peak &= response > max(params.rel_threshold * response.max(), 1e-12)
    b = params.border
    peak[:b] = peak[-b:] = False
    peak[:, :b] = peak[:, -b:] = False

    v, u = np.nonzero(peak)
    order = np.argsort(-response[v, u], kind="stable")[: params.max_corners]
    return np.column_stack([u[order], v[order]]).astype(np.float64)


def patch_descriptors(gray: np.ndarray, corners: np.ndarray, patch_size: int = 11) -> np.ndarray:
    """Zero-mean, unit-norm patches (K, patch_size²); flat patches become zero vectors."""
    r = patch_size // 2
    offsets = np.arange(-r, r + 1)
    u = corners[:, 0].astype(int)[:, None, None] + offsets[None, None, :]
    v = corners[:, 1].astype(int)[:, None, None] + offsets[None, :, None]
    patches = gray[v, u].reshape(len(corners), -1)
    patches = patches - patches.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(patches, axis=1, keepdims=True)
    return np.where(norm > 1e-8, patches / np.maximum(norm, 1e-8), 0.0)


# =============================================================================
# MATCHING
# =============================================================================

def match_pair(
    image_n: np.ndarray,
    image_m: np.ndarray,
    F: Optional[np.ndarray] = None,
    params: Optional[MatchParams] = None,
) -> np.ndarray:
    """Mutual-best ZNCC matches (K, 5) between two views; F enables the epipolar gate."""
    params = params or MatchParams()
    gray_n, gray_m = to_gray(image_n), to_gray(image_m)
    kp_n, kp_m = harris_corners(gray_n, params), harris_corners(gray_m, params)
    if len(kp_n) == 0 or len(kp_m) == 0:
        return np.zeros((0, 5))

    scores = patch_descriptors(gray_n, kp_n, params.patch_size) @ patch_descriptors(gray_m, kp_m, params.patch_size).T
    if F is not None:
        lines = np.column_stack([kp_n, np.ones(len(kp_n))]) @ F.T
        xm = np.column_stack([kp_m, np.ones(len(kp_m))])
        dist = np.abs(lines @ xm.T) / np.hypot(lines[:, :1], lines[:, 1:2])
        scores = np.where(dist <= params.epipolar_gate, scores, -np.inf)

    best_m = np.argmax(scores, axis=1)
    best_n = np.argmax(scores, axis=0)
    rows = np.arange(len(kp_n))
    best = scores[rows, best_m]
    if scores.shape[1] > 1:
        second = np.partition(scores, -2, axis=1)[:, -2]
    else:
        second = np.full(len(kp_n), -1.0)
    second = np.where(np.isfinite(second), second, -1.0)

    keep = (best_n[best_m] == rows) & np.isfinite(best) & (best >= params.min_score)
    keep &= (1.0 - best) < params.ratio * (1.0 - second)
    idx = rows[keep]
    return np.column_stack([kp_n[idx], kp_m[best_m[idx]], best[idx]])


def match_overlap(
    images: Union[np.ndarray, Tensor],
    rig: CameraRig,
    params: Optional[MatchParams] = None,
    pairs: Optional[Iterable[Pair]] = None,
) -> MatchSet:
    """Match every ring-adjacent pair of an (N, C, H, W) frame."""
    images = images.data if isinstance(images, Tensor) else np.asarray(images)
    params = params or MatchParams()
    pairs = rig.adjacent_pairs() if pairs is None else list(pairs)
    found: Dict[Pair, np.ndarray] = {}
    for n, m in pairs:
        if not rig.is_adjacent(n, m):
            raise NonAdjacentCameraError(f"Cameras {n} and {m} are not ring neighbors")
        F = fundamental_matrix(rig, n, m) if rig.baseline(n, m) > 1e-9 else None
        found[(n, m)] = match_pair(images[n], images[m], F, params)
        logger.debug(f"Pair ({n}, {m}): {len(found[(n, m)])} matches")
    return MatchSet(found, image_size=rig.image_size)


# =============================================================================
# MATCH FILES
# =============================================================================

def write_match_file(matches: MatchSet, path: Union[str, Path]) -> Path:
    """One JSON object per line: {"pair": [n, m], "points": [[u1, v1, u2, v2, conf], ...]}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({
        "pair": [[n, m] for n, m in matches.pairs],
        "points": [rows.tolist() for rows in matches.pairs.values()],
    })
    df.to_json(path, orient="records", lines=True)
    return path


def load_match_file(path: Union[str, Path], image_size: Optional[Tuple[int, int]] = None) -> MatchSet:
    path = Path(path)
    if path.stat().st_size == 0:
        return MatchSet({}, image_size)
    df = pd.read_json(path, orient="records", lines=True)
    missing = {"pair", "points"} - set(df.columns)
    if missing:
        raise ValueError(f"Match file {path} lacks fields {sorted(missing)}")
    pairs = {}
    for pair, points in zip(df["pair"], df["points"]):
        if len(pair) != 2:
            raise ValueError(f"Match file {path} has a malformed pair {pair}")
        pairs[(int(pair[0]), int(pair[1]))] = np.asarray(points, dtype=np.float64).reshape(-1, 5)
    return MatchSet(pairs, image_size)
