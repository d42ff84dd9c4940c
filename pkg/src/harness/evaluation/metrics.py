"""Depth metrics over pixels with valid ground truth."""

from __future__ import annotations

from typing import Dict

import numpy as np

from shared.config import D_MAX, Z_MIN
from shared.schemas.metric_schema import METRIC_COLUMNS

DELTA_THRESHOLDS = (1.25, 1.25 ** 2, 1.25 ** 3)


class NoValidGroundTruthError(ValueError):
    pass


def valid_mask(gt: np.ndarray, max_depth: float = D_MAX) -> np.ndarray:
    gt = np.asarray(gt)
    return np.isfinite(gt) & (gt > 0) & (gt <= max_depth)


def median_scale(pred: np.ndarray, gt: np.ndarray, max_depth: float = D_MAX) -> float:
    """median(gt) / median(pred) over the valid pixels of one image."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    mask = valid_mask(gt, max_depth)
    if not mask.any():
        raise NoValidGroundTruthError(f"No ground-truth pixels in (0, {max_depth}]")
    return float(np.median(gt[mask]) / np.median(pred[mask]))


def compute_depth_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    max_depth: float = D_MAX,
    median_scaled: bool = False,
) -> Dict[str, float]:
    """
    abs_rel, sq_rel, rmse, rmse_log and the three δ accuracies for one image.

    With median_scaled the prediction is first multiplied by
    median(gt)/median(pred), so any uniform scale error cancels. The
    ratio is taken per camera image, not once over all views of a frame.
    """
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"Prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    mask = valid_mask(gt, max_depth)
    if not mask.any():
        raise NoValidGroundTruthError(f"No ground-truth pixels in (0, {max_depth}]")
    d, g = pred[mask], gt[mask]
    if median_scaled:
        d = d * (np.median(g) / np.median(d))
    d = np.maximum(d, Z_MIN)

    ratio = np.maximum(d / g, g / d)
    values = {
        "abs_rel": np.mean(np.abs(d - g) / g),
        "sq_rel": np.mean((d - g) ** 2 / g),
        "rmse": np.sqrt(np.mean((d - g) ** 2)),
        "rmse_log": np.sqrt(np.mean((np.log(d) - np.log(g)) ** 2)),
        "a1": np.mean(ratio < DELTA_THRESHOLDS[0]),
        "a2": np.mean(ratio < DELTA_THRESHOLDS[1]),
        "a3": np.mean(ratio < DELTA_THRESHOLDS[2]),
    }
    return {k: float(values[k]) for k in METRIC_COLUMNS}


def abs_rel_map(pred: np.ndarray, gt: np.ndarray, max_depth: float = D_MAX) -> np.ndarray:
    """|d - g| / g per pixel; zero where the ground truth is invalid."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    mask = valid_mask(gt, max_depth)
    out = np.zeros_like(gt)
    out[mask] = np.abs(pred[mask] - gt[mask]) / gt[mask]
    return out
