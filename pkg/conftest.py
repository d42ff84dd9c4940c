import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from shared.config import LR_ROUND1, LR_ROUND2, SFM_WEIGHT_ROUND1, SFM_WEIGHT_ROUND2  # noqa: E402
from shared.contracts.train_contracts import DataConfig, NetworkSettings, RoundConfig, TrainConfig  # noqa: E402


def _make_tiny_config(out_dir, steps=(2, 2), **overrides) -> TrainConfig:
    """Three wide cameras at 32x64 and a network small enough for unit tests."""
    data = DataConfig(image_size=(32, 64), n_cameras=3, hfov_deg=140.0, n_boxes=2, n_frames=6, eval_stride=10)
    network = NetworkSettings(
        channels=(4, 4, 8, 8),
        decoder_channels=(2, 2, 4, 4, 4),
        pose_channels=(4, 8),
        nca_depth=1,
        n_heads=2,
        mlp_ratio=2,
    )
    rounds = [
        RoundConfig(steps=steps[0], learning_rate=LR_ROUND1, sfm_weight=SFM_WEIGHT_ROUND1),
        RoundConfig(steps=steps[1], learning_rate=LR_ROUND2, sfm_weight=SFM_WEIGHT_ROUND2, filter_ratio=1.0 / 3.0),
    ]
    fields = dict(rounds=rounds, data=data, network=network, out_dir=str(out_dir), n_jobs=1, log_every=1)
    fields.update(overrides)
    return TrainConfig(**fields)


@pytest.fixture
def make_config():
    return _make_tiny_config


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """Untrained checkpoint of the tiny setup; the heads start at 10 m."""
    from src.harness.training.train_pipeline import train

    config = _make_tiny_config(tmp_path_factory.mktemp("tiny_run"), steps=(0, 0), use_sfm=False)
    return train(config).checkpoint_path
