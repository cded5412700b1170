import numpy as np
import pytest

from stereo3d.scenegen.camera import StereoCamera
from stereo3d.scenegen.dataset import build_sample
from stereo3d.scenegen.mesh import box
from stereo3d.scenegen.render import Pose, render_stereo
from stereo3d.metrics import epe
from stereo3d.sgbm import (
    SgmParams,
    aggregate_sgm,
    fill_background,
    matching_cost,
    max_cost,
    sgbm_disparity,
    to_gray,
)


def shifted_pair(shape=(48, 80), k=5, seed=11):
    """Gray random texture and a copy shifted right by k pixels."""
    rng = np.random.default_rng(seed)
    right = rng.random(shape)
    left = np.empty_like(right)
    left[:, k:] = right[:, : shape[1] - k]
    left[:, :k] = rng.random((shape[0], k))
    to_rgb = lambda g: np.repeat(g[:, :, None], 3, axis=2)
    return to_rgb(left), to_rgb(right)


# ---------------------------------------------------------------------------
# parameters and helpers
# ---------------------------------------------------------------------------

def test_params_validation():
    for kwargs in (
        dict(d_max=0),
        dict(p1=0.0),
        dict(p1=5.0, p2=4.0),
        dict(paths=3),
        dict(cost="ncc"),
        dict(census_window=4),
        dict(census_window=1),
        dict(block_radius=0),
        dict(photometric_gate=0.0),
        dict(min_raw_variation=-1.0),
        dict(zero_disparity_gate=-0.5),
    ):
        with pytest.raises(ValueError):
            SgmParams(**kwargs)
    p = SgmParams(photometric_gate=None, zero_disparity_gate=None)
    assert p.photometric_gate is None and p.zero_disparity_gate is None


def test_to_gray_weights():
    img = np.zeros((2, 2, 3))
    img[0, 0] = (1.0, 0.0, 0.0)
    img[0, 1] = (0.0, 1.0, 0.0)
    img[1, 0] = (0.0, 0.0, 1.0)
    g = to_gray(img)
    assert g[0, 0] == pytest.approx(0.299)
    assert g[0, 1] == pytest.approx(0.587)
    assert g[1, 0] == pytest.approx(0.114)


def test_to_gray_rejects_bad_shape():
    with pytest.raises(ValueError):
        to_gray(np.zeros((4, 4)))


def test_matching_cost_rejects_wide_range():
    g = np.zeros((4, 8))
    with pytest.raises(ValueError):
        matching_cost(g, g, SgmParams(d_max=8))


def test_matching_cost_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        matching_cost(np.zeros((4, 8)), np.zeros((4, 9)), SgmParams(d_max=4))


def test_matching_cost_out_of_range_is_max():
    left, right = shifted_pair()
    p = SgmParams(d_max=10)
    cost = matching_cost(to_gray(left), to_gray(right), p)
    # disparity d is unreachable for columns x < d
    for d in (1, 5, 10):
        assert (cost[:, :d, d] == max_cost(p)).all()


# ---------------------------------------------------------------------------
# cost volumes on synthetic shifts
# ---------------------------------------------------------------------------

def test_sad_shift_recovery_exact():
    k = 5
    left, right = shifted_pair(k=k)
    p = SgmParams(d_max=10, cost="sad")
    cost = matching_cost(to_gray(left), to_gray(right), p)
    # away from the unmatched border strip every window is a perfect copy,
    # so the SAD argmin recovers the shift exactly
    interior = cost[3:-3, 12:-3]
    assert (interior.argmin(2) == k).all()


def test_census_shift_recovery_near_exact():
    # census ties structurally whenever a center is its window minimum (the
    # whole word is zero), so exactness is only demanded of SAD above
    k = 5
    left, right = shifted_pair(k=k)
    p = SgmParams(d_max=10)
    cost = matching_cost(to_gray(left), to_gray(right), p)
    interior = cost[3:-3, 12:-3]
    assert (interior.argmin(2) == k).mean() > 0.98


# ---------------------------------------------------------------------------
# semi-global aggregation
# ---------------------------------------------------------------------------

def test_aggregate_zero_penalty_is_paths_times_cost():
    left, right = shifted_pair(shape=(20, 40))
    cost = matching_cost(to_gray(left), to_gray(right), SgmParams(d_max=8))
    for paths in (1, 2, 4, 8):
        agg = aggregate_sgm(cost, SgmParams(d_max=8, paths=paths), p1=0.0, p2=0.0)
        assert (agg == paths * cost).all()


def test_aggregate_single_row_matches_dp_oracle():
    rng = np.random.default_rng(7)
    cost = rng.uniform(0, 10, (1, 9, 5))
    p1, p2 = 1.5, 6.0
    agg = aggregate_sgm(cost, SgmParams(d_max=4, paths=1, p1=p1, p2=p2))
    # left-to-right scanline recurrence, written with the same grouping as
    # the implementation so the comparison is exact
    expect = np.empty_like(cost)
    expect[0, 0] = cost[0, 0]
    for x in range(1, 9):
        prev = expect[0, x - 1]
        best = prev.min()
        for d in range(5):
            cands = [prev[d], best + p2]
            if d > 0:
                cands.append(prev[d - 1] + p1)
            if d < 4:
                cands.append(prev[d + 1] + p1)
            expect[0, x, d] = cost[0, x, d] + (min(cands) - best)
    assert (agg == expect).all()


def test_aggregate_nonnegative_and_finite():
    left, right = shifted_pair(shape=(16, 32))
    cost = matching_cost(to_gray(left), to_gray(right), SgmParams(d_max=6))
    agg = aggregate_sgm(cost, SgmParams(d_max=6, paths=8))
    assert np.isfinite(agg).all() and (agg >= 0).all()


def test_aggregate_rejects_bad_rank():
    with pytest.raises(ValueError):
        aggregate_sgm(np.zeros((4, 4)), SgmParams())


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def test_disparity_output_contract():
    left, right = shifted_pair()
    p = SgmParams(d_max=10)
    dl, dr, vl, vr = sgbm_disparity(left, right, p)
    assert dl.dtype == np.float32 and dr.dtype == np.float32
    assert vl.dtype == bool and vr.dtype == bool
    for d in (dl, dr):
        assert d.shape == left.shape[:2]
        assert (d >= 0).all() and (d <= p.d_max).all()
    # a valid left match must land inside the right image
    ys, xs = np.nonzero(vl)
    assert (xs - np.rint(dl[vl]) >= 0).all()


def test_disparity_recovers_synthetic_shift():
    k = 5
    left, right = shifted_pair(k=k)
    dl, _, vl, _ = sgbm_disparity(left, right, SgmParams(d_max=10))
    inner = vl[3:-3, 12:-3]
    assert inner.mean() > 0.9
    assert np.abs(dl[3:-3, 12:-3][inner] - k).max() <= 0.5


def test_disparity_deterministic():
    left, right = shifted_pair()
    a = sgbm_disparity(left, right, SgmParams(d_max=10))
    b = sgbm_disparity(left, right, SgmParams(d_max=10))
    for x, y in zip(a, b):
        assert (x == y).all()


def test_texture_free_input_is_all_invalid():
    flat = np.full((40, 60, 3), 0.5)
    _, _, vl, vr = sgbm_disparity(flat, flat, SgmParams(d_max=20))
    assert not vl.any() and not vr.any()


def test_identical_pair_valid_only_at_zero():
    rng = np.random.default_rng(5)
    tex = np.repeat(rng.random((48, 64, 1)), 3, axis=2)
    dl, dr, vl, vr = sgbm_disparity(tex, tex, SgmParams(d_max=16))
    assert vl.mean() > 0.5
    assert np.abs(dl[vl]).max() == 0.0
    assert np.abs(dr[vr]).max() == 0.0


def test_frontal_plane_disparity():
    cam = StereoCamera()
    plate = box(1.0, 1.0, 0.02, rng=np.random.default_rng(3), checker=8)
    pose = Pose(azimuth_deg=0.0, elevation_deg=0.0, distance_m=2.26, scale_m=0.5)
    left, right, _, _ = render_stereo(plate, pose, cam)
    dl, _, vl, _ = sgbm_disparity(left, right, SgmParams())
    true_d = cam.focal_px * cam.baseline_m / 2.25
    assert vl.sum() > 1000
    assert abs(float(np.median(dl[vl])) - true_d) < 0.5


def test_rendered_scene_epe():
    # the acceptance run covers twenty scenes; three here keep the unit
    # suite quick while still exercising the full pipeline
    cam = StereoCamera()
    for idx in range(3):
        s = build_sample(23, idx, cam, voxel_res=16, n_gt=256,
                         kinds=("table", "chair", "lamp"))
        dl, _, vl, _ = sgbm_disparity(s.left_rgb, s.right_rgb, SgmParams())
        gt = np.where(np.isfinite(s.disp_l), s.disp_l, 0.0)
        counted = vl & ~s.occl_l
        assert counted.sum() > 500
        assert epe(dl, gt, ~counted) <= 2.0


def test_no_confident_disparity_on_background():
    # edge fattening would validate object disparities on flat background
    # pixels just outside a silhouette; the zero-disparity ambiguity gate
    # must keep those out of the valid mask
    cam = StereoCamera()
    s = build_sample(23, 1, cam, voxel_res=16, n_gt=256,
                     kinds=("table", "chair", "lamp"))
    dl, _, vl, _ = sgbm_disparity(s.left_rgb, s.right_rgb, SgmParams())
    gt = np.where(np.isfinite(s.disp_l), s.disp_l, 0.0)
    fattened = vl & ~s.occl_l & (gt < 0.5) & (dl > 3.0)
    assert fattened.sum() == 0


# ---------------------------------------------------------------------------
# hole filling
# ---------------------------------------------------------------------------

def test_fill_background_takes_farther_neighbor():
    disp = np.array([[4.0, 0.0, 0.0, 9.0]], np.float32)
    valid = np.array([[True, False, False, True]])
    out = fill_background(disp, valid)
    assert (out == np.array([[4.0, 4.0, 4.0, 9.0]], np.float32)).all()


def test_fill_background_edges_use_single_side():
    disp = np.array([[0.0, 7.0, 0.0]], np.float32)
    valid = np.array([[False, True, False]])
    out = fill_background(disp, valid)
    assert (out == 7.0).all()


def test_fill_background_empty_row_is_zero():
    disp = np.array([[3.0, 5.0]], np.float32)
    valid = np.zeros((1, 2), bool)
    assert (fill_background(disp, valid) == 0.0).all()


def test_fill_background_keeps_valid_pixels():
    rng = np.random.default_rng(2)
    disp = rng.uniform(0, 10, (6, 9)).astype(np.float32)
    valid = rng.random((6, 9)) > 0.4
    out = fill_background(disp, valid)
    assert (out[valid] == disp[valid]).all()


def test_fill_background_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        fill_background(np.zeros((2, 3)), np.zeros((3, 2), bool))
