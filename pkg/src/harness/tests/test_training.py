from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from shared.contracts.train_contracts import TrainConfig
from src.harness.training.train_pipeline import (
    NumericalAbortError,
    batch_frames,
    build_state,
    compute_losses,
    loss_weights,
    round_schedule,
    train,
    train_step,
)
from src.networks.checkpoint import load_checkpoint


def test_zero_step_run_writes_initial_checkpoint(tmp_path, make_config):
    config = make_config(tmp_path, steps=(0, 0))
    artifacts = train(config)
    assert artifacts.steps == 0
    tensors, meta = load_checkpoint(artifacts.checkpoint_path)
    assert meta["step"] == 0 and meta["optimizer"]["t"] == 0

    fresh = build_state(config)
    for name, value in fresh.depth.state_dict().items():
        np.testing.assert_array_equal(tensors[f"depth.{name}"], value)
    assert pd.read_csv(artifacts.loss_log_path).empty


def test_single_step_decreases_loss_on_same_batch(tmp_path, make_config):
    config = make_config(tmp_path, use_sfm=False)
    state = build_state(config)
    state.optimizer.lr = 1e-5
    frames = [state.sequence.sample(2)]
    weights = loss_weights(config, round_schedule(config, 1))

    before = train_step(state, frames, weights)["loss"]
    after = compute_losses(state, frames, weights)[1]["loss"]
    assert np.isfinite(before)
    assert after < before


def test_batches_cover_each_epoch_once(tmp_path, make_config):
    state = build_state(make_config(tmp_path, use_sfm=False))
    epoch = [batch_frames(state, step)[0] for step in range(state.epoch_length)]
    assert sorted(epoch) == sorted(state.train_frames)
    assert epoch == [batch_frames(state, step)[0] for step in range(state.epoch_length)]


def test_resumed_run_bit_matches_uninterrupted(tmp_path, make_config):
    """Stops inside round 2, so the resumed half refilters and restores Adam state."""
    full = train(make_config(tmp_path / "full"))
    make = lambda: make_config(tmp_path / "split")  # noqa: E731
    first = train(make(), stop_after=3)
    assert first.steps == 3
    resumed = train(make(), resume_from=first.checkpoint_path)
    assert resumed.steps == full.steps == 4

    a, meta_a = load_checkpoint(full.checkpoint_path)
    b, meta_b = load_checkpoint(resumed.checkpoint_path)
    assert set(a) == set(b)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    assert meta_a["optimizer"] == meta_b["optimizer"]
    assert meta_a["filtered_keep"] == meta_b["filtered_keep"]
    pd.testing.assert_frame_equal(pd.read_csv(full.loss_log_path), pd.read_csv(resumed.loss_log_path))


def test_loss_log_columns(tmp_path, make_config):
    artifacts = train(make_config(tmp_path, steps=(1, 1)))
    log = pd.read_csv(artifacts.loss_log_path)
    assert list(log["step"]) == [1, 2]
    assert list(log["round"]) == [1, 2]
    assert (log["sfm_points"] >= 0).all()
    assert np.isfinite(log[["loss", "sfm", "photo", "smooth"]].to_numpy()).all()


def test_nan_loss_aborts_with_dump(tmp_path, make_config):
    config = make_config(tmp_path, use_sfm=False)
    state = build_state(config)
    state.depth.fusion_head.conv.bias.data = np.full(1, np.nan)
    weights = loss_weights(config, round_schedule(config, 1))
    with pytest.raises(NumericalAbortError):
        train_step(state, [state.sequence.sample(2)], weights)
    dump = np.load(Path(config.out_dir) / "nan_dump_step0.npz")
    assert dump["frames"].tolist() == [2]
    assert dump["images"].shape == (1, 3, 3, 32, 64)


def test_default_config_uses_documented_loss_weights():
    config = TrainConfig()
    first = loss_weights(config, round_schedule(config, 1))
    second = loss_weights(config, round_schedule(config, 2))
    assert (first.sfm, second.sfm) == (0.1, 0.005)
    for weights in (first, second):
        assert weights.photo == 0.5 and weights.smooth == 1.0
        assert weights.full_res == pytest.approx(1.0 / 2.0)
        assert weights.aux_res == pytest.approx(1.0 / 6.0)
