"""
Static evaluation artifacts: metric tables, depth and error maps, images
warped from the adjacent views, and loss curves.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from shared.config import D_MAX
from shared.contracts.train_contracts import DataConfig, EvalReport
from shared.schemas.metric_schema import LOSS_LOG_COLUMNS, METRIC_COLUMNS
from src.harness.data import build_sequence
from src.harness.evaluation.metrics import abs_rel_map
from src.harness.evaluation.predictor import DepthPredictor, FramePrediction, predict_frames, summarize
from src.harness.training.train_pipeline import LOSS_LOG_NAME
from src.scene.image_io import depth_to_gray, write_pfm, write_ppm

logger = logging.getLogger("harness.eval")

FLOAT_FORMAT = "%.6f"
LOSS_CURVE_COLUMNS = ["step", "round", "loss", "sfm", "photo", "smooth"]


class ReportWriteError(RuntimeError):
    pass


class ReportExporter:
    def __init__(self, out_dir: Union[str, Path] = "data/report"):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportWriteError(f"Cannot create report directory {self.out_dir}: {e}") from e
        self.written: List[Path] = []

    def _keep(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def write_metrics(self, report: EvalReport) -> Path:
        """metrics.csv and metrics.txt, one row per mode, columns in benchmark order."""
        table = pd.DataFrame(
            [[report.metrics[mode][k] for k in METRIC_COLUMNS] for mode in report.metrics],
            index=pd.Index(list(report.metrics), name="mode"),
            columns=METRIC_COLUMNS,
        )
        path = self.out_dir / "metrics.csv"
        table.to_csv(path, float_format=FLOAT_FORMAT)
        text = self.out_dir / "metrics.txt"
        text.write_text(
            table.to_string(float_format=lambda v: f"{v:.4f}")
            + f"\n\nmedian(pred)/median(gt): {report.median_ratio:.4f}"
            + f"\nframes: {report.n_frames}, images: {report.n_images}\n"
        )
        self._keep(text)
        return self._keep(path)

    def write_per_view(self, report: EvalReport) -> Path:
        rows = [
            {"mode": mode, "view": int(view), **values}
            for mode, views in report.per_view.items()
            for view, values in views.items()
        ]
        path = self.out_dir / "per_view.csv"
        pd.DataFrame(rows, columns=["mode", "view"] + METRIC_COLUMNS).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return self._keep(path)

    def write_report_json(self, report: EvalReport) -> Path:
        path = self.out_dir / "eval_report.json"
        path.write_text(json.dumps(report.model_dump(mode="json"), indent=2))
        return self._keep(path)

    def write_maps(self, prediction: FramePrediction, predictor: DepthPredictor, rig, max_depth: float = D_MAX) -> List[Path]:
        """Per view: predicted depth, abs_rel error map and the views warped in from both ring neighbors."""
        maps_dir = self.out_dir / "maps"
        warped = {offset: predictor.warp_from_neighbor(prediction, rig, offset) for offset in (-1, 1)}
        paths = []
        for n in range(prediction.depth.shape[0]):
            stem = f"frame{prediction.index:04d}_view{n}"
            depth, gt = prediction.depth[n, 0], prediction.gt[n, 0]
            error = abs_rel_map(depth, gt, max_depth)
            paths += [
                write_pfm(maps_dir / f"{stem}_depth.pfm", depth),
                write_ppm(maps_dir / f"{stem}_depth.ppm", depth_to_gray(depth)),
                write_ppm(maps_dir / f"{stem}_gt.ppm", depth_to_gray(gt)),
                write_pfm(maps_dir / f"{stem}_abs_rel.pfm", error),
                write_ppm(maps_dir / f"{stem}_abs_rel.ppm", np.clip(error, 0.0, 1.0)),
                write_ppm(maps_dir / f"{stem}_image.ppm", prediction.images[n]),
            ]
            for offset, name in ((-1, "prev"), (1, "next")):
                synth, valid = warped[offset]
                paths.append(write_ppm(maps_dir / f"{stem}_warped_{name}_view.ppm", synth[n] * valid[n]))
        self.written += paths
        return paths

    def write_loss_curves(self, loss_log: Union[str, Path]) -> Optional[Path]:
        loss_log = Path(loss_log)
        if not loss_log.exists():
            logger.warning(f"No loss log at {loss_log}; loss curves skipped")
            return None
        log = pd.read_csv(loss_log)
        missing = [c for c in LOSS_LOG_COLUMNS if c not in log.columns]
        if missing:
            raise ValueError(f"Loss log {loss_log} lacks columns {missing}")
        curves = log[LOSS_CURVE_COLUMNS].copy()
        curves["loss_smoothed"] = curves["loss"].rolling(window=10, min_periods=1).mean()
        path = self.out_dir / "loss_curves.csv"
        curves.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return self._keep(path)


def generate_report(
    checkpoint: Union[str, Path],
    out_dir: Union[str, Path],
    data: Optional[DataConfig] = None,
    frames: Optional[Sequence[int]] = None,
    max_depth: float = D_MAX,
    map_frames: int = 1,
    n_jobs: int = -1,
    loss_log: Optional[Union[str, Path]] = None,
) -> List[Path]:
    """Evaluate a checkpoint and write every artifact; maps cover the first `map_frames` frames."""
    exporter = ReportExporter(out_dir)
    predictor = DepthPredictor(checkpoint)
    data = data or predictor.data_config()
    frames = list(frames) if frames else predictor.default_frames(data)
    sequence = build_sequence(data)
    predictions = predict_frames(predictor, sequence, frames, n_jobs)
    metrics, per_view, ratio, n_images = summarize(predictions, max_depth=max_depth)
    report = EvalReport(
        checkpoint=str(checkpoint),
        metrics=metrics,
        per_view=per_view,
        median_ratio=ratio,
        n_frames=len(frames),
        n_images=n_images,
        runtime_s=0.0,
        frames=frames,
    )
    exporter.write_metrics(report)
    exporter.write_per_view(report)
    exporter.write_report_json(report)
    for prediction in predictions[:map_frames]:
        exporter.write_maps(prediction, predictor, sequence.rig, max_depth)
    exporter.write_loss_curves(loss_log or Path(checkpoint).parent / LOSS_LOG_NAME)
    logger.info(f"Report written to {exporter.out_dir} ({len(exporter.written)} files)")
    return exporter.written
