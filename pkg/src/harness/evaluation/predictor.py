"""
Predictor for Surround Depth
============================
Loads a trained checkpoint and evaluates it against exact rendered depth:
- Scale-aware metrics on the raw predictions
- Median-scaled metrics from the same predictions
- Per-view breakdown, median(pred)/median(gt) ratio and runtime
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from shared.config import D_MAX
from shared.contracts.train_contracts import DataConfig, EvalReport
from shared.schemas.metric_schema import EVAL_MODES, METRIC_COLUMNS
from src.geometry.warping import warp_views
from src.harness.data import build_sequence, split_frames
from src.harness.evaluation.metrics import NoValidGroundTruthError, compute_depth_metrics, valid_mask
from src.networks.checkpoint import load_checkpoint, section
from src.networks.depth_network import DepthNetwork, DepthNetworkConfig
from src.scene.sequence import FrameSequence
from src.tensor.tensor import Tensor, no_grad

logger = logging.getLogger("harness.eval")


@dataclass
class FramePrediction:
    index: int
    images: np.ndarray
    depth: np.ndarray
    gt: np.ndarray


class DepthPredictor:
    """Depth network restored from a training checkpoint."""

    def __init__(self, checkpoint_path: Union[str, Path]):
        self.checkpoint_path = str(checkpoint_path)
        tensors, self.meta = load_checkpoint(checkpoint_path)
        self.config = DepthNetworkConfig.from_dict(self.meta["network"])
        self.network = DepthNetwork(self.config)
        self.network.load_state_dict(section(tensors, "depth"))
        self.step = int(self.meta.get("step", 0))

    def data_config(self) -> DataConfig:
        return DataConfig.model_validate(self.meta["train_config"]["data"])

    def default_frames(self, data: DataConfig) -> List[int]:
        frames = self.meta.get("eval_frames")
        return list(frames) if frames else split_frames(data)[1]

    def predict(self, images: np.ndarray) -> np.ndarray:
        """(N, 3, H, W) views of one frame -> (N, 1, H, W) depth."""
        # no_grad is per thread, so workers enter it themselves
        with no_grad():
            output = self.network(Tensor(images[None]))
        return np.asarray(output.final.data[0])

    def warp_from_neighbor(self, prediction: FramePrediction, rig, offset: int) -> Tuple[np.ndarray, np.ndarray]:
        """Each view synthesized from its ring neighbor at `offset` through the predicted depth."""
        idx = [rig.ring_neighbor(n, offset) for n in range(rig.n_cameras)]
        with no_grad():
            synth, valid = warp_views(
                Tensor(prediction.depth),
                Tensor(prediction.images[idx]),
                rig.spatial_transforms(offset),
                rig.intrinsics,
                rig.intrinsics[idx],
            )
        return np.asarray(synth.data), np.asarray(valid)


def predict_frames(
    predictor: DepthPredictor,
    sequence: FrameSequence,
    frames: Sequence[int],
    n_jobs: int = -1,
) -> List[FramePrediction]:
    frames = list(frames)
    bad = [k for k in frames if not 0 <= k < len(sequence)]
    if bad:
        raise ValueError(f"Frames {bad} are outside the {len(sequence)}-frame sequence")
    sequence.prefetch(frames, n_jobs)

    def _one(k: int) -> FramePrediction:
        images, gt = sequence.views(k)
        return FramePrediction(k, images, predictor.predict(images), gt)

    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_one)(k) for k in frames)


def _image_rows(predictions: Sequence[FramePrediction], modes: Sequence[str], max_depth: float) -> pd.DataFrame:
    rows = []
    for p in predictions:
        for n in range(p.depth.shape[0]):
            pred, gt = p.depth[n, 0], p.gt[n, 0]
            mask = valid_mask(gt, max_depth)
            if not mask.any():
                logger.warning(f"Frame {p.index} view {n}: no valid ground truth, skipped")
                continue
            ratio = float(np.median(pred[mask]) / np.median(gt[mask]))
            # median scaling happens per view image inside compute_depth_metrics
            for mode in modes:
                metrics = compute_depth_metrics(pred, gt, max_depth, median_scaled=mode == "median-scaled")
                rows.append({"frame": p.index, "view": n, "mode": mode, "ratio": ratio, **metrics})
    return pd.DataFrame(rows, columns=["frame", "view", "mode", "ratio"] + METRIC_COLUMNS)


def summarize(
    predictions: Sequence[FramePrediction],
    modes: Sequence[str] = EVAL_MODES,
    max_depth: float = D_MAX,
) -> Tuple[Dict[str, Dict[str, float]], Dict[str, Dict[str, Dict[str, float]]], float, int]:
    """(metrics per mode, per-view metrics per mode, mean median ratio, image count); averages over images."""
    table = _image_rows(predictions, modes, max_depth)
    if table.empty:
        raise NoValidGroundTruthError(f"No image has ground-truth pixels in (0, {max_depth}]")
    metrics, per_view = {}, {}
    for mode, group in table.groupby("mode", sort=False):
        metrics[mode] = {k: float(v) for k, v in group[METRIC_COLUMNS].mean().items()}
        per_view[mode] = {
            str(view): {k: float(v) for k, v in row.items()}
            for view, row in group.groupby("view")[METRIC_COLUMNS].mean().iterrows()
        }
    first = table[table["mode"] == modes[0]]
    return metrics, per_view, float(first["ratio"].mean()), len(first)


def evaluate(
    checkpoint: Union[str, Path],
    data: Optional[DataConfig] = None,
    mode: Optional[str] = None,
    max_depth: float = D_MAX,
    frames: Optional[Sequence[int]] = None,
    n_jobs: int = -1,
) -> EvalReport:
    """
    Metrics of a checkpoint on rendered frames with exact depth.

    Both modes are computed from the same predictions unless `mode` picks
    one. Data and frames default to the run's own scene and held-out frames.
    """
    start = time.perf_counter()
    if mode is not None and mode not in EVAL_MODES:
        raise ValueError(f"Unknown evaluation mode '{mode}', expected one of {EVAL_MODES}")
    predictor = DepthPredictor(checkpoint)
    data = data or predictor.data_config()
    frames = list(frames) if frames else predictor.default_frames(data)
    sequence = build_sequence(data)
    predictions = predict_frames(predictor, sequence, frames, n_jobs)
    modes = EVAL_MODES if mode is None else [mode]
    metrics, per_view, ratio, n_images = summarize(predictions, modes, max_depth)
    runtime = time.perf_counter() - start
    for m in modes:
        logger.info(
            f"{m}: abs_rel {metrics[m]['abs_rel']:.4f}, rmse {metrics[m]['rmse']:.3f}, a1 {metrics[m]['a1']:.3f}"
        )
    logger.info(f"Evaluated {len(frames)} frames ({n_images} images) in {runtime:.1f}s, median ratio {ratio:.3f}")
    return EvalReport(
        checkpoint=str(checkpoint),
        metrics=metrics,
        per_view=per_view,
        median_ratio=ratio,
        n_frames=len(frames),
        n_images=n_images,
        runtime_s=runtime,
        frames=frames,
    )
