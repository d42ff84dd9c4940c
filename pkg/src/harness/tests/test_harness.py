import json

import numpy as np
import pandas as pd
import pytest

from shared.contracts.scene_contracts import SceneSpec
from shared.contracts.train_contracts import DataConfig, FlopsRequest, ratio_sweep_presets
from shared.schemas.metric_schema import METRIC_COLUMNS
from src.harness.cli import main
from src.harness.data import split_frames
from src.harness.evaluation.metrics import (
    NoValidGroundTruthError,
    abs_rel_map,
    compute_depth_metrics,
    median_scale,
)
from src.harness.evaluation.predictor import FramePrediction, evaluate, summarize
from src.harness.flops import attention_macs, conv_macs, flops_estimate, nca_layers
from src.harness.report.report_exporter import generate_report
from src.nca.config import NcaConfig
from src.scene.image_io import depth_to_gray, read_pfm


def _make_gt(shape=(24, 40), seed=0):
    return np.random.default_rng(seed).uniform(2.0, 80.0, shape)


# =============================================================================
# METRICS
# =============================================================================

def test_perfect_prediction():
    gt = _make_gt()
    m = compute_depth_metrics(gt.copy(), gt)
    assert list(m) == METRIC_COLUMNS
    assert m["abs_rel"] == 0.0 and m["rmse"] == 0.0 and m["rmse_log"] == 0.0
    assert m["a1"] == m["a2"] == m["a3"] == 1.0


def test_uniform_double_depth():
    """2 exceeds 1.25^3 = 1.953, so every accuracy is zero."""
    gt = _make_gt()
    m = compute_depth_metrics(2.0 * gt, gt)
    assert m["abs_rel"] == pytest.approx(1.0)
    assert m["sq_rel"] == pytest.approx(gt.mean())
    assert m["a1"] == 0.0 and m["a3"] == 0.0


def test_median_scaling_recovers_half_depth():
    gt = _make_gt()
    m = compute_depth_metrics(0.5 * gt, gt, median_scaled=True)
    assert m["abs_rel"] == pytest.approx(0.0, abs=1e-12)
    assert m["a1"] == 1.0
    assert median_scale(0.5 * gt, gt) == pytest.approx(2.0)


def test_median_scaled_metrics_ignore_global_scale():
    gt = _make_gt()
    pred = gt * np.random.default_rng(1).uniform(0.7, 1.3, gt.shape)
    base = compute_depth_metrics(pred, gt, median_scaled=True)
    scaled = compute_depth_metrics(3.7 * pred, gt, median_scaled=True)
    for k in METRIC_COLUMNS:
        assert scaled[k] == pytest.approx(base[k], rel=1e-9, abs=1e-12)
    assert compute_depth_metrics(2.0 * pred, gt)["abs_rel"] != pytest.approx(compute_depth_metrics(pred, gt)["abs_rel"])


def test_invalid_ground_truth_is_ignored():
    gt = _make_gt((4, 4))
    gt[0, 0] = 0.0
    gt[1, 1] = 250.0
    pred = gt.copy()
    pred[0, 0] = pred[1, 1] = 1.0
    assert compute_depth_metrics(pred, gt, max_depth=200.0)["abs_rel"] == 0.0
    error = abs_rel_map(pred, gt)
    assert error.shape == gt.shape and error[0, 0] == 0.0
    with pytest.raises(NoValidGroundTruthError):
        compute_depth_metrics(pred, np.zeros((4, 4)))


# =============================================================================
# FLOPS
# =============================================================================

def test_pointwise_conv_macs():
    assert conv_macs(12, 20, 16, 32, k=1) == 12 * 20 * 16 * 32


def test_doubling_token_area_quadruples_attention():
    def attention(size, grid):
        config = NcaConfig(token_grid=grid, n_heads=2, global_depth=3)
        return sum(l.macs for l in nca_layers("nca", 16, size, 6, config) if l.kind == "attention")

    assert attention((12, 40), (3, 10)) == 4 * attention((12, 20), (3, 5))
    assert attention_macs(30, 30, 8) == 4 * attention_macs(15, 15, 8)


def test_nca_attention_is_cheaper_than_global_only():
    """Triplet context (3 views) against a full 6-view stage: (36 + 3*72) / (4*72)."""
    report = flops_estimate(FlopsRequest())
    assert report.attention["ratio"] == pytest.approx(252.0 / 288.0)
    assert report.module["nca"] < report.module["global_only"]
    parts = report.by_part()
    assert set(parts) == {"encoder", "nca", "decoder", "heads"}
    assert report.total_macs == sum(parts.values())


# =============================================================================
# DATA SPLIT AND PRESETS
# =============================================================================

def test_frame_split_holds_out_every_stride():
    train, held_out = split_frames(DataConfig(n_frames=25, eval_stride=10))
    assert held_out == [1, 11, 21]
    assert set(train) | set(held_out) == set(range(1, 24))
    assert not set(train) & set(held_out)


def test_full_filtering_turns_sfm_off_in_round_two():
    configs = ratio_sweep_presets()
    assert configs[0].rounds[1].filter_ratio == 1.0
    assert configs[0].rounds[1].sfm_weight == 0.0
    assert configs[-1].rounds[1].sfm_weight > 0.0


# =============================================================================
# EVALUATION AND REPORTS
# =============================================================================

def test_evaluate_is_pure_and_reports_both_modes(tiny_checkpoint):
    a = evaluate(tiny_checkpoint, n_jobs=2)
    b = evaluate(tiny_checkpoint, n_jobs=1)
    assert set(a.metrics) == {"scale-aware", "median-scaled"}
    assert a.metrics == b.metrics
    assert a.per_view == b.per_view
    assert set(a.per_view["scale-aware"]) == {"0", "1", "2"}
    assert a.n_images == 3 * a.n_frames
    assert a.median_ratio > 0.0


def test_median_scaling_is_per_view_image():
    """Views off by different factors each rescale on their own."""
    gt = np.stack([_make_gt(seed=0), _make_gt(seed=1)])[:, None]
    pred = gt * np.array([0.5, 2.0])[:, None, None, None]
    frame = FramePrediction(index=1, images=np.zeros((2, 3, 24, 40)), depth=pred, gt=gt)
    metrics, per_view, ratio, n_images = summarize([frame])
    assert metrics["median-scaled"]["abs_rel"] == pytest.approx(0.0, abs=1e-12)
    assert metrics["scale-aware"]["abs_rel"] == pytest.approx(0.75)
    assert per_view["scale-aware"]["1"]["abs_rel"] == pytest.approx(1.0)
    assert ratio == pytest.approx(1.25) and n_images == 2


def test_evaluate_rejects_frames_outside_sequence(tiny_checkpoint):
    with pytest.raises(ValueError):
        evaluate(tiny_checkpoint, frames=[99])


def test_report_files_and_determinism(tiny_checkpoint, tmp_path):
    generate_report(tiny_checkpoint, tmp_path / "a", n_jobs=1)
    generate_report(tiny_checkpoint, tmp_path / "b", n_jobs=1)
    metrics = pd.read_csv(tmp_path / "a" / "metrics.csv")
    assert list(metrics.columns) == ["mode"] + METRIC_COLUMNS
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "metrics.txt").exists()
    assert (tmp_path / "a" / "loss_curves.csv").exists()

    maps = sorted((tmp_path / "a" / "maps").glob("*_abs_rel.pfm"))
    assert len(maps) == 3
    assert read_pfm(maps[0]).shape == (32, 64)
    assert len(list((tmp_path / "a" / "maps").glob("*_warped_*_view.ppm"))) == 6


def test_report_depth_preview_is_normalized_inverse_depth(tiny_checkpoint, tmp_path):
    generate_report(tiny_checkpoint, tmp_path, n_jobs=1)
    depth_pfm = sorted((tmp_path / "maps").glob("*_depth.pfm"))[0]
    raw = depth_pfm.with_suffix(".ppm").read_bytes().split(b"\n", 3)[3]
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(32, 64, 3)
    expected = np.round(depth_to_gray(read_pfm(depth_pfm)) * 255.0)
    np.testing.assert_allclose(pixels[..., 0], expected, atol=1.0)


# =============================================================================
# CLI
# =============================================================================

def test_cli_gen_scene(tmp_path):
    out = tmp_path / "scene.json"
    code = main(["gen-scene", "--out", str(out), "--size", "32", "64", "--cameras", "3", "--boxes", "2"])
    assert code == 0
    spec = SceneSpec.model_validate_json(out.read_text())
    assert len(spec.rig.cameras) == 3


def test_cli_config_errors_exit_2(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"rounds": [{"learning_rate": -1.0, "sfm_weight": 0.1}]}))
    assert main(["train", "--config", str(bad)]) == 2


def test_cli_flops_and_zero_step_train(tmp_path, make_config):
    assert main(["flops"]) == 0
    config = tmp_path / "run.json"
    config.write_text(make_config(tmp_path / "run", use_sfm=False).model_dump_json())
    assert main(["train", "--config", str(config), "--steps", "0"]) == 0
    assert (tmp_path / "run" / "checkpoint.ckpt").exists()
