import numpy as np
import pytest

from src.geometry.camera_rig import default_ring_rig
from src.geometry.warping import warp_temporal
from src.losses.combine import LossWeights, ResolutionCountError, ResolutionLosses, combine_losses
from src.losses.photometric import (
    DIAGNOSTICS,
    combine_photometric_terms,
    photometric_error_map,
    photometric_loss,
    ssim,
)
from src.losses.sfm_loss import SparseDepthTarget, ViewTarget, sfm_loss, sfm_loss_views
from src.losses.smoothness import smoothness_loss
from src.tensor.gradcheck import check_gradients
from src.tensor.tensor import Tensor


def _checkerboard(H=6, W=8):
    v, u = np.mgrid[0:H, 0:W]
    return ((u + v) % 2).astype(float)[None, None]


# =============================================================================
# SSIM / PHOTOMETRIC
# =============================================================================

def test_ssim_self_similarity_and_symmetry():
    rng = np.random.default_rng(0)
    x = Tensor(rng.random((1, 3, 6, 7)))
    y = Tensor(rng.random((1, 3, 6, 7)))
    np.testing.assert_allclose(ssim(x, x).data, 1.0, atol=1e-12)
    np.testing.assert_allclose(ssim(x, y).data, ssim(y, x).data, atol=1e-15)
    assert ssim(x, y).data.min() >= -1.0 and ssim(x, y).data.max() <= 1.0


def test_ssim_anticorrelated_checkerboard():
    x = _checkerboard()
    assert (ssim(Tensor(x), Tensor(1.0 - x)).data < 0).all()


def test_ssim_constant_images_luminance_only():
    c1, c2 = 0.3, 0.7
    expected = (2 * c1 * c2 + 0.01 ** 2) / (c1 ** 2 + c2 ** 2 + 0.01 ** 2)
    out = ssim(Tensor(np.full((1, 1, 5, 5), c1)), Tensor(np.full((1, 1, 5, 5), c2))).data
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_combine_photometric_terms_closed_form():
    assert combine_photometric_terms(0.8, 0.1, 0.85) == pytest.approx(0.1)


def test_photometric_loss_identical_images_zero():
    rng = np.random.default_rng(1)
    x = Tensor(rng.random((1, 3, 6, 6)))
    mask = np.ones((1, 1, 6, 6), dtype=bool)
    for a in (0.0, 0.85, 1.0):
        assert abs(photometric_loss(x, x, mask, a).item()) < 1e-12


def test_photometric_loss_nonnegative():
    rng = np.random.default_rng(2)
    for _ in range(5):
        x, y = Tensor(rng.random((1, 3, 5, 5))), Tensor(rng.random((1, 3, 5, 5)))
        assert photometric_loss(x, y, rng.random((1, 1, 5, 5)) > 0.3).item() >= 0.0


def test_photometric_loss_minimum_over_sources():
    """Each pixel keeps its best valid source; invalid sources never win."""
    rng = np.random.default_rng(3)
    target = Tensor(rng.random((1, 3, 6, 8)))
    exact = Tensor(target.data.copy())
    shifted = Tensor(np.clip(target.data + 0.1, 0, 1))
    left = np.zeros((1, 1, 6, 8), dtype=bool)
    left[..., :4] = True
    right_err = photometric_error_map(target, shifted).data
    loss = photometric_loss(target, [exact, shifted], [left, np.ones_like(left)])
    expected = np.where(left, 0.0, right_err).mean()
    assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_photometric_loss_empty_mask_counts():
    before = DIAGNOSTICS["empty_mask"]
    x = Tensor(np.ones((1, 3, 4, 4)))
    out = photometric_loss(x, x * 0.5, np.zeros((1, 1, 4, 4), dtype=bool))
    assert out.item() == 0.0
    assert DIAGNOSTICS["empty_mask"] == before + 1


def test_photometric_loss_gradient():
    rng = np.random.default_rng(4)
    target = Tensor(rng.random((1, 3, 5, 6)))
    s1 = Tensor(rng.random((1, 3, 5, 6)), requires_grad=True)
    s2 = Tensor(rng.random((1, 3, 5, 6)), requires_grad=True)
    m1 = rng.random((1, 1, 5, 6)) > 0.2
    m2 = rng.random((1, 1, 5, 6)) > 0.2
    assert check_gradients(lambda: photometric_loss(target, [s1, s2], [m1, m2]), [s1, s2]) < 1e-3


def test_warp_photometric_pipeline_gradient():
    """Depth and pose gradients through warp → SSIM/L1 loss."""
    rig = default_ring_rig(image_size=(8, 12))
    rng = np.random.default_rng(5)
    v, u = np.mgrid[0:8, 0:12]
    source = Tensor(np.stack([0.5 + 0.3 * np.sin(0.7 * u + 0.4 * v + k) for k in range(3)]))
    target = Tensor(rng.random((3, 8, 12)))
    depth = Tensor(rng.uniform(4.0, 6.0, (1, 8, 12)), requires_grad=True)
    pose = Tensor(np.array([0.02, -0.01, 0.01, 0.05, 0.02, 0.1]), requires_grad=True)

    def loss():
        synth, mask = warp_temporal(0, depth, pose, source, rig)
        return photometric_loss(target, synth, mask)

    assert check_gradients(loss, [depth, pose]) < 1e-3


# =============================================================================
# SMOOTHNESS
# =============================================================================

def test_smoothness_constant_depth_zero():
    image = Tensor(np.random.default_rng(6).random((3, 5, 7)))
    assert smoothness_loss(Tensor(np.full((1, 5, 7), 4.0)), image).item() == pytest.approx(0.0, abs=1e-15)


def test_smoothness_ramp_closed_form():
    s = 0.02
    disp = 0.1 + s * np.arange(8)[None, :] * np.ones((5, 1))
    loss = smoothness_loss(Tensor((1.0 / disp)[None]), Tensor(np.full((3, 5, 8), 0.5))).item()
    assert loss == pytest.approx(s / disp.mean(), rel=1e-10)


def test_smoothness_edge_aware_monotonic():
    disp = 0.1 + 0.02 * np.arange(8)[None, :] * np.ones((6, 1))
    depth = Tensor((1.0 / disp)[None])
    flat = smoothness_loss(depth, Tensor(np.full((3, 6, 8), 0.5))).item()
    edges = smoothness_loss(depth, Tensor(np.repeat(_checkerboard(6, 8)[0], 3, axis=0))).item()
    assert flat > edges


def test_smoothness_gradient():
    rng = np.random.default_rng(7)
    depth = Tensor(rng.uniform(2.0, 8.0, (1, 1, 5, 6)), requires_grad=True)
    image = Tensor(rng.random((1, 3, 5, 6)))
    assert check_gradients(lambda: smoothness_loss(depth, image), [depth]) < 1e-3


# =============================================================================
# SFM LOSS
# =============================================================================

def _target_from_map(gt, uv):
    uv = np.asarray(uv, dtype=float)
    return ViewTarget(uv, gt[0, uv[:, 1].astype(int), uv[:, 0].astype(int)])


def test_sfm_loss_exact_fit_and_scale_offset():
    rng = np.random.default_rng(8)
    gt = rng.uniform(2.0, 40.0, (1, 6, 9))
    target = _target_from_map(gt, [[0, 0], [3, 2], [8, 5], [4, 4]])
    loss, per_point = sfm_loss(Tensor(gt), target)
    assert loss.item() == pytest.approx(0.0, abs=1e-12)
    assert per_point.shape == (4,)
    loss, _ = sfm_loss(Tensor(2.0 * gt), target)
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_sfm_loss_direct_formula_and_permutation():
    pred = np.full((1, 4, 4), 5.0)
    target = ViewTarget([[0, 0], [1, 1], [2, 3]], [5.0, 10.0, 2.5])
    loss, per_point = sfm_loss(Tensor(pred), target)
    expected = np.abs(np.log(5.0) - np.log([5.0, 10.0, 2.5]))
    np.testing.assert_allclose(per_point, expected, atol=1e-12)
    assert loss.item() == pytest.approx(expected.mean())
    perm = np.array([2, 0, 1])
    shuffled, _ = sfm_loss(Tensor(pred), target.subset(perm))
    assert shuffled.item() == pytest.approx(loss.item(), abs=1e-15)


def test_sfm_loss_empty_target():
    loss, per_point = sfm_loss(Tensor(np.ones((1, 3, 3))), ViewTarget(np.zeros((0, 2)), np.zeros(0)))
    assert loss.item() == 0.0 and len(per_point) == 0


def test_sfm_loss_views_pools_points_and_gradient():
    rng = np.random.default_rng(9)
    pred = Tensor(rng.uniform(3.0, 6.0, (3, 1, 5, 5)), requires_grad=True)
    target = SparseDepthTarget(
        {0: ViewTarget([[1.5, 2.25], [3.0, 1.0]], [4.0, 5.0]), 2: ViewTarget([[0.5, 0.5]], [3.5])},
        image_size=(5, 5),
    )
    loss, per_view = sfm_loss_views(pred, target)
    assert len(per_view[0]) == 2 and len(per_view[1]) == 0 and len(per_view[2]) == 1
    assert loss.item() == pytest.approx(np.concatenate([per_view[0], per_view[2]]).mean())
    assert check_gradients(lambda: sfm_loss_views(pred, target)[0], [pred]) < 1e-4


def test_sparse_target_rejects_out_of_raster():
    with pytest.raises(ValueError):
        SparseDepthTarget({0: ViewTarget([[9.0, 1.0]], [3.0])}, image_size=(4, 4))
    with pytest.raises(ValueError):
        ViewTarget([[1.0, 1.0]], [-1.0])


# =============================================================================
# COMBINATION
# =============================================================================

def test_combine_losses_unit_values():
    ones = [(1.0, 1.0, 1.0)] * 4
    assert combine_losses(ones, LossWeights.for_round(1)).item() == pytest.approx(1.6)
    per_res = ResolutionLosses(1.0, 1.0, 1.0).combined(LossWeights.for_round(2)).item()
    assert per_res == pytest.approx(1.505)
    assert combine_losses([(0.0, 0.0, 0.0)] * 4, LossWeights()).item() == 0.0


def test_combine_losses_linear_coefficients():
    """Probing unit vectors recovers σ·p for every component and resolution."""
    w = LossWeights.for_round(1)
    for r in range(4):
        p = w.full_res if r == 0 else w.aux_res
        for c, sigma in enumerate((w.sfm, w.photo, w.smooth)):
            unit = [[0.0, 0.0, 0.0] for _ in range(4)]
            unit[r][c] = 1.0
            assert combine_losses(unit, w).item() == pytest.approx(sigma * p, abs=1e-15)


def test_combine_losses_resolution_count():
    with pytest.raises(ResolutionCountError):
        combine_losses([(1.0, 1.0, 1.0)] * 3, LossWeights())


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(a=1.5)
    with pytest.raises(ValueError):
        LossWeights(round=3)
    assert LossWeights.for_round(2).sfm == 0.005
