import numpy as np
import pytest
from pydantic import ValidationError

from shared.contracts.scene_contracts import BoxSpec, PlaneSpec, SceneSpec, TextureSpec
from src.geometry.camera_rig import CameraRig, default_ring_rig, rigid_inverse
from src.geometry.projection import DepthMap
from src.geometry.se3 import PoseDelta
from src.geometry.triangulation import epipolar_distance, fundamental_matrix
from src.geometry.warping import warp_spatial, warp_temporal
from src.scene.image_io import ImageFormatError, depth_to_gray, read_pfm, write_pfm, write_ppm
from src.scene.renderer import ValueNoise, render, uncovered_cameras
from src.scene.scene_spec import build_rig, default_scene, load_scene, save_scene
from src.scene.sequence import ego_sequence, render_sequence
from src.sfm.matching import match_overlap
from src.tensor.tensor import Tensor

SMOOTH = TextureSpec(frequency=0.25, octaves=1, contrast=0.7)


def _make_plane_scene(point, normal, texture=SMOOTH, **kwargs):
    return SceneSpec(planes=[PlaneSpec(point=point, normal=normal)], texture=texture, **kwargs)


def _masked_error(synth, target, valid):
    mask = np.broadcast_to(valid, target.shape)
    return np.abs(synth - target)[mask].mean()


# =============================================================================
# RENDERING
# =============================================================================

def test_fronto_parallel_plane_has_constant_depth():
    """Camera 0 sits at z = 1, so the plane z = 11 is 10 m away everywhere."""
    frame, depths = render(_make_plane_scene((0.0, 0.0, 11.0), (0.0, 0.0, 1.0)), 0)
    assert frame.images.shape == (6, 3, 96, 160)
    np.testing.assert_allclose(depths[0].values.data, 10.0, rtol=1e-12)
    assert depths[0].camera_id == 0


def test_camera_seeing_nothing_gets_background():
    spec = _make_plane_scene((0.0, 0.0, 11.0), (0.0, 0.0, 1.0))
    frame, depths = render(spec, 0)
    # camera 3 looks backwards, away from the plane
    np.testing.assert_array_equal(depths[3].values.data, 200.0)
    np.testing.assert_array_equal(frame.images[3], spec.light.background)
    assert 3 in uncovered_cameras(spec)


def test_render_is_deterministic():
    spec = default_scene(seed=3)
    a, _ = render(spec, 0)
    b, _ = render(spec, 0)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.depths, b.depths)


def test_nearer_primitive_occludes():
    spec = SceneSpec(
        planes=[PlaneSpec(point=(0.0, 0.0, 11.0), normal=(0.0, 0.0, 1.0))],
        boxes=[BoxSpec(min_corner=(-1.0, -1.0, 4.0), max_corner=(1.0, 1.0, 6.0))],
    )
    _, depths = render(spec, 0)
    d = depths[0].values.data[0]
    np.testing.assert_allclose(d[48, 80], 3.0, rtol=1e-12)
    np.testing.assert_allclose(d[48, 0], 10.0, rtol=1e-12)


def test_default_scene_covers_every_camera():
    spec = default_scene(seed=0)
    assert uncovered_cameras(spec) == []
    _, depths = render(spec, 0)
    assert all(d.values.data.max() < 200.0 for d in depths)


def test_value_noise_range_and_seed():
    points = np.random.default_rng(0).uniform(-50, 50, (500, 3))
    a = ValueNoise(seed=1, octaves=3).fractal(points, 2.0, 3, 0.5)
    b = ValueNoise(seed=1, octaves=3).fractal(points, 2.0, 3, 0.5)
    c = ValueNoise(seed=2, octaves=3).fractal(points, 2.0, 3, 0.5)
    assert a.min() >= 0.0 and a.max() <= 1.0
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


# =============================================================================
# RENDERER / WARP CROSS-VALIDATION
# =============================================================================

def test_spatial_warp_with_true_depth_matches_neighbor():
    """Plane facing the 30° direction between cameras 0 and 1, 10 m out."""
    yaw = np.radians(30.0)
    normal = (np.sin(yaw), 0.0, np.cos(yaw))
    spec = _make_plane_scene(tuple(10.0 * np.asarray(normal)), normal)
    frame, depths = render(spec, 0)
    rig = build_rig(spec)
    synth, valid = warp_spatial(0, 1, depths[0], Tensor(frame.images[1]), rig)
    assert valid.sum() > 300
    assert _masked_error(synth.data, frame.images[0], valid) < 1e-3


@pytest.mark.parametrize("dt", [1, -1])
def test_temporal_warp_with_true_pose_matches_next_frame(dt):
    spec = _make_plane_scene((0.0, 0.0, 11.0), (0.0, 0.0, 1.0))
    seq = ego_sequence(spec, 3, [0.0, 0.02, 0.0, 0.0, 0.0, 0.3])
    images, depths = seq.views(1)
    source = seq.views(1 + dt)[0][0]
    pose = seq.point_transform(1, dt)
    synth, valid = warp_temporal(0, DepthMap(depths[0], 0), pose, Tensor(source), seq.rig)
    assert valid.sum() > 1000
    assert _masked_error(synth.data, images[0], valid) < 1e-3


# =============================================================================
# EGO SEQUENCES
# =============================================================================

def test_zero_motion_gives_identity_deltas():
    seq = ego_sequence(default_scene(), 4, PoseDelta.identity())
    for delta in seq.deltas():
        np.testing.assert_allclose(delta.to_vector(), 0.0, atol=1e-12)


def test_forward_motion_delta():
    seq = ego_sequence(default_scene(), 5, [0, 0, 0, 0, 0, 0.3])
    assert len(seq) == 5
    for delta in seq.deltas():
        np.testing.assert_allclose(delta.translation, [0.0, 0.0, 0.3], atol=1e-12)
        np.testing.assert_allclose(delta.axis_angle, 0.0, atol=1e-12)
    np.testing.assert_allclose(seq.point_transform(2, 1).translation, [0.0, 0.0, -0.3], atol=1e-12)


def test_composed_trajectory_is_product_of_deltas():
    rng = np.random.default_rng(5)
    motions = [PoseDelta(rng.normal(scale=0.05, size=3), rng.normal(scale=0.3, size=3)) for _ in range(10)]
    seq = ego_sequence(default_scene(), 11, motions)
    product = np.eye(4)
    for delta in seq.deltas():
        product = product @ delta.matrix()
    np.testing.assert_allclose(product, rigid_inverse(seq.poses[0]) @ seq.poses[10], atol=1e-9)
    with pytest.raises(ValueError):
        ego_sequence(default_scene(), 5, motions)


def test_sample_carries_temporal_neighbors():
    seq = ego_sequence(default_scene(image_size=(32, 64), n_boxes=2), 3, [0, 0, 0, 0, 0, 0.1])
    middle = seq.sample(1)
    assert middle.has_neighbors
    np.testing.assert_array_equal(middle.neighbor(-1), seq.views(0)[0])
    assert seq.sample(0).previous is None
    with pytest.raises(ValueError):
        seq.sample(2).neighbor(1)


def test_parallel_rendering_matches_sequential():
    seq = ego_sequence(default_scene(image_size=(32, 64), n_boxes=2), 3, [0, 0.01, 0, 0, 0, 0.2])
    rendered = render_sequence(seq.spec, [2, 0], rig=seq.rig, n_jobs=2)
    np.testing.assert_array_equal(rendered[0][0], seq.views(2)[0])
    np.testing.assert_array_equal(rendered[1][1], seq.views(0)[1])


# =============================================================================
# MATCHER ON RENDERED VIEWS
# =============================================================================

def test_matcher_on_one_meter_stereo_baseline():
    base = default_ring_rig(n_cameras=2, image_size=(96, 160))
    right = np.eye(4)
    right[0, 3] = 1.0
    rig = CameraRig(base.intrinsics, np.stack([np.eye(4), right]), (96, 160))
    spec = SceneSpec(
        planes=[PlaneSpec(point=(0.0, 0.0, 6.0), normal=(0.0, 0.0, -1.0))],
        rig=rig.to_file_model(),
        texture=TextureSpec(frequency=3.0, octaves=2, contrast=0.9),
    )
    frame, _ = render(spec, 0)
    rows = match_overlap(frame.images, rig).pair(0, 1)
    assert len(rows) >= 50
    residual = epipolar_distance(fundamental_matrix(rig, 0, 1), rows[:, :2], rows[:, 2:4])
    assert np.mean(residual < 1.0) >= 0.9
    disparity = base.intrinsics[0, 0, 0] / 6.0
    assert abs(np.median(rows[:, 0] - rows[:, 2]) - disparity) < 1.5


# =============================================================================
# SCENE FILES AND IMAGE DUMPS
# =============================================================================

def test_scene_file_round_trip(tmp_path):
    spec = default_scene(seed=4, n_boxes=3)
    loaded = load_scene(save_scene(spec, tmp_path / "scene.json"))
    assert loaded == spec


def test_scene_validation():
    with pytest.raises(ValidationError):
        SceneSpec()
    skewed = np.eye(4)
    skewed[0, 1] = 0.5
    with pytest.raises(ValidationError):
        _make_plane_scene((0, 0, 5), (0, 0, 1), trajectory=[skewed.ravel().tolist()])
    with pytest.raises(ValidationError):
        BoxSpec(min_corner=(1, 0, 0), max_corner=(0, 1, 1))


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    gray = rng.uniform(0.1, 200.0, (12, 20)).astype(np.float32)
    color = rng.random((3, 12, 20)).astype(np.float32)
    np.testing.assert_array_equal(read_pfm(write_pfm(tmp_path / "d.pfm", gray)), gray)
    np.testing.assert_array_equal(read_pfm(write_pfm(tmp_path / "c.pfm", color)), color)
    (tmp_path / "bad.pfm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ImageFormatError):
        read_pfm(tmp_path / "bad.pfm")


def test_ppm_header_and_size(tmp_path):
    path = write_ppm(tmp_path / "depth.ppm", depth_to_gray(np.full((12, 20), 10.0)))
    raw = path.read_bytes()
    assert raw.startswith(b"P6\n20 12\n255\n")
    assert len(raw) == len(b"P6\n20 12\n255\n") + 12 * 20 * 3
