import numpy as np
import pytest

from src.geometry.camera_rig import default_ring_rig
from src.geometry.warping import warp_views
from src.losses.combine import LossWeights, combine_losses
from src.losses.photometric import photometric_loss
from src.nca.config import NcaConfig
from src.networks.checkpoint import load_checkpoint, module_tensors, save_checkpoint, section
from src.networks.depth_network import (
    DepthNetwork,
    DepthNetworkConfig,
    ResolutionError,
    depth_forward,
    sigmoid_to_depth,
)
from src.networks.pose_network import PoseNetwork, pose_forward, to_pose_delta
from src.tensor.gradcheck import check_gradients
from src.tensor.serialization import TensorFormatError
from src.tensor.tensor import Tensor


def _make_config(n_views=3, size=(32, 64), **overrides):
    overrides.setdefault("channels", (4, 4, 8, 8))
    overrides.setdefault("decoder_channels", (2, 2, 4, 4, 4))
    overrides.setdefault("nca", NcaConfig(token_grid=(size[0] // 32, size[1] // 32), n_heads=2, global_depth=1, mlp_ratio=2))
    return DepthNetworkConfig(image_size=size, n_views=n_views, **overrides)


def _make_images(shape, seed=0):
    return Tensor(np.random.default_rng(seed).random(shape))


# =============================================================================
# DEPTH NETWORK
# =============================================================================

def test_sigmoid_to_depth_mapping():
    assert sigmoid_to_depth(0.5) == pytest.approx(1.0 / 5.0025)
    assert sigmoid_to_depth(1.0) == pytest.approx(0.1)
    assert sigmoid_to_depth(0.0) == pytest.approx(200.0)


def test_default_network_output_shapes():
    net = DepthNetwork(DepthNetworkConfig())
    out = net(_make_images((1, 6, 3, 96, 160)))
    assert out.final.shape == (1, 6, 1, 96, 160)
    assert out.heads["full"].shape == (1, 6, 1, 96, 160)
    assert out.heads["1/4"].shape == (1, 6, 1, 24, 40)
    assert out.heads["1/8"].shape == (1, 6, 1, 12, 20)
    assert out.heads["1/16"].shape == (1, 6, 1, 6, 10)
    assert all(d.shape == (1, 6, 1, 96, 160) for d in out.loss_depths())
    assert sorted(net.nca.keys()) == ["s16", "s32", "s4", "s8"]


def test_depth_strictly_inside_range():
    net = DepthNetwork(_make_config(), rng=np.random.default_rng(1))
    out = net(_make_images((2, 3, 3, 32, 64), seed=1))
    for depth in [out.final] + list(out.heads.values()):
        assert depth.data.min() > 0.1 and depth.data.max() < 200.0


def test_zeroed_heads_predict_init_depth():
    net = DepthNetwork(_make_config(init_depth=12.0))
    for head in [h for _, h in net.heads.items()] + [net.fusion_head]:
        head.conv.weight.data = np.zeros_like(head.conv.weight.data)
    out = net(_make_images((1, 3, 3, 32, 64)))
    np.testing.assert_allclose(out.final.data, 12.0, rtol=1e-9)
    np.testing.assert_allclose(out.heads["1/8"].data, 12.0, rtol=1e-9)


def test_depth_forward_deterministic():
    images = _make_images((1, 3, 3, 32, 64), seed=2)
    a = depth_forward(images, DepthNetwork(_make_config(), rng=np.random.default_rng(5))).final.data
    b = depth_forward(images, DepthNetwork(_make_config(), rng=np.random.default_rng(5))).final.data
    np.testing.assert_array_equal(a, b)


def test_resolution_errors():
    with pytest.raises(ResolutionError):
        DepthNetworkConfig(image_size=(100, 160))
    net = DepthNetwork(_make_config())
    with pytest.raises(ResolutionError):
        net(_make_images((1, 3, 3, 64, 64)))


def test_plain_skips_without_nca():
    net = DepthNetwork(_make_config(use_nca=False))
    assert not any(name.startswith("nca.") for name, _ in net.named_parameters())
    assert net(_make_images((1, 3, 3, 32, 64))).final.shape == (1, 3, 1, 32, 64)


def test_nca_parameter_sections():
    names = [name for name, _ in DepthNetwork(_make_config()).named_parameters()]
    for scale in ("s4", "s8", "s16", "s32"):
        assert any(n.startswith(f"nca.{scale}.downsample_embed.") for n in names)
        assert any(n.startswith(f"nca.{scale}.global_blocks.") for n in names)


def test_auxiliary_heads_gradient_free_without_aux_weight():
    net = DepthNetwork(_make_config())
    out = net(_make_images((1, 3, 3, 32, 64), seed=3))
    per_res = [(0.0, d.mean(), 0.0) for d in out.loss_depths()]
    combine_losses(per_res, LossWeights(aux_res=0.0)).backward()
    for scale in ("1/4", "1/8", "1/16"):
        grad = net.heads[scale].conv.weight.grad
        assert grad is None or np.linalg.norm(grad) == 0.0
    assert np.linalg.norm(net.fusion_head.conv.weight.grad) > 0.0
    assert np.linalg.norm(net.heads["full"].conv.weight.grad) > 0.0


def test_end_to_end_photometric_gradient():
    """images -> fused depth -> spatial warp -> SSIM/L1 loss at 32x32."""
    config = _make_config(size=(32, 32), channels=(4, 4, 4, 4), decoder_channels=(2, 2, 2, 2, 2))
    net = DepthNetwork(config, rng=np.random.default_rng(7))
    rig = default_ring_rig(n_cameras=3, image_size=(32, 32), hfov_deg=140.0)
    v, u = np.mgrid[0:32, 0:32]
    images = Tensor(np.stack([
        np.stack([0.5 + 0.3 * np.sin(0.3 * u + 0.2 * v + n + c) for c in range(3)]) for n in range(3)
    ])[None])

    def loss():
        depth = net(images).final
        synth, valid = warp_views(depth[:, 0], images[:, 1], rig.relative_transform(0, 1),
                                  rig.intrinsics[0], rig.intrinsics[1])
        return photometric_loss(images[:, 0], synth, valid)

    params = [net.fusion_head.conv.weight, net.decoder["up1"].conv.weight, net.encoder.stages[0][0].conv.weight]
    assert check_gradients(loss, params, n_samples=5) < 1e-3


# =============================================================================
# POSE NETWORK
# =============================================================================

def test_pose_network_starts_at_identity():
    net = PoseNetwork(3, (32, 64))
    a, b = _make_images((2, 3, 3, 32, 64), 1), _make_images((2, 3, 3, 32, 64), 2)
    pose = pose_forward(net, a, b, dt=1)
    assert pose.shape == (2, 6)
    np.testing.assert_array_equal(pose.data, 0.0)
    delta = to_pose_delta(pose)
    np.testing.assert_array_equal(delta.matrix(), np.eye(4))


def test_pose_backward_frame_is_group_inverse():
    net = PoseNetwork(3, (32, 64), rng=np.random.default_rng(4))
    net.head.weight.data = np.random.default_rng(5).normal(scale=0.01, size=net.head.weight.shape)
    a, b = _make_images((1, 3, 3, 32, 64), 1), _make_images((1, 3, 3, 32, 64), 2)
    forward = pose_forward(net, a, b, dt=1).data
    backward = pose_forward(net, b, a, dt=-1).data
    np.testing.assert_allclose(backward, -forward, atol=1e-15)
    with pytest.raises(ValueError):
        pose_forward(net, a, b, dt=2)


def test_pose_translation_is_scaled():
    net = PoseNetwork(2, (32, 32))
    net.head.bias.data = np.ones(6)
    pose = net(_make_images((1, 2, 3, 32, 32)), _make_images((1, 2, 3, 32, 32), 1)).data[0]
    np.testing.assert_allclose(pose, [1, 1, 1, 0.01, 0.01, 0.01])


# =============================================================================
# CHECKPOINTS
# =============================================================================

def test_checkpoint_round_trip(tmp_path):
    config = _make_config()
    depth, pose = DepthNetwork(config, rng=np.random.default_rng(1)), PoseNetwork(3, (32, 64))
    meta = {"config": config.to_dict(), "step": 17}
    path = save_checkpoint(tmp_path / "model.ckpt", module_tensors({"depth": depth, "pose": pose}), meta)

    tensors, loaded_meta = load_checkpoint(path)
    assert loaded_meta["step"] == 17
    restored = DepthNetwork(DepthNetworkConfig.from_dict(loaded_meta["config"]), rng=np.random.default_rng(99))
    restored.load_state_dict(section(tensors, "depth"))
    images = _make_images((1, 3, 3, 32, 64), seed=6)
    np.testing.assert_array_equal(restored(images).final.data, depth(images).final.data)
    assert any(name.startswith("depth.nca.s8.neighbor.") for name in tensors)


def test_checkpoint_rejects_corrupt_files(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(TensorFormatError):
        load_checkpoint(bad)
    good = save_checkpoint(tmp_path / "good.ckpt", {"w": np.ones((2, 3))})
    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(TensorFormatError):
        load_checkpoint(truncated)
