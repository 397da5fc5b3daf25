import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facereenact.engine import Tensor
from facereenact.geometry import (FULL_FACE, HEATMAP_VARIANCE, N_LANDMARKS, REGIONS, LandmarkFormatError,
                                  RegionSpec, SimilarityTransform, adapt_landmark_shape, crop_region,
                                  estimate_similarity, place_region, rasterize_heatmaps, read_landmarks,
                                  region_frame, region_landmarks, rms_spread, write_landmarks)
from facereenact.synthdata import FaceDataset
from helpers import smooth_image

REGION = {r.name: r for r in REGIONS}


@pytest.fixture(scope="module")
def face():
    return FaceDataset(1, 2, seed=3).frame(0, 0)


def random_landmarks(seed, lo=10.0, hi=54.0):
    return np.random.default_rng(seed).uniform(lo, hi, size=(N_LANDMARKS, 2))


# ---------------------------------------------------------------- heatmaps
def test_heatmap_variance_default_is_three():
    assert HEATMAP_VARIANCE == 3.0


def test_heatmap_peak_and_e_minus_one_at_squared_distance_six():
    lm = np.full((N_LANDMARKS, 2), 20.0)
    lm[0] = (10.0, 12.0)
    hm = rasterize_heatmaps(lm, 32, 32)
    assert hm.shape == (N_LANDMARKS, 32, 32)
    assert hm[0, 12, 10] == 1.0
    # (dx, dy) = (1, sqrt(5)) is off-grid, so probe (dx, dy) with dx^2 + dy^2 = 6 via a shifted landmark
    lm[1] = (10.0 - math.sqrt(6.0), 12.0)
    assert rasterize_heatmaps(lm, 32, 32)[1, 12, 10] == pytest.approx(math.exp(-1.0), rel=1e-6)


def test_coincident_landmarks_give_identical_channels():
    lm = random_landmarks(0)
    lm[5] = lm[9]
    hm = rasterize_heatmaps(lm, 24, 24)
    np.testing.assert_array_equal(hm[5], hm[9])


def test_offframe_landmark_rasterizes_its_tail():
    lm = random_landmarks(1)
    lm[0] = (-2.0, 5.0)
    hm = rasterize_heatmaps(lm, 16, 16)
    assert hm[0, 5, 0] == pytest.approx(math.exp(-4.0 / 6.0), rel=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_heatmap_range_and_argmax(seed):
    lm = random_landmarks(seed, 0.0, 31.0)
    hm = rasterize_heatmaps(lm, 32, 32)
    assert hm.min() >= 0.0 and hm.max() <= 1.0
    ys, xs = np.mgrid[0:32, 0:32]
    for k in range(0, N_LANDMARKS, 7):
        d2 = (xs - lm[k, 0]) ** 2 + (ys - lm[k, 1]) ** 2
        # strictly positive wherever the value is representable in 32-bit
        assert np.all(hm[k][d2 < 400] > 0)
        best = np.unravel_index(np.argmax(hm[k]), hm[k].shape)
        assert d2[best] == pytest.approx(d2.min(), abs=1e-9)


# -------------------------------------------------------------- regions
def test_region_index_sets():
    assert len(region_landmarks(random_landmarks(0), REGION["eye_left"])) == 6
    assert REGION["eye_left"].indices == tuple(range(36, 42))
    assert REGION["eye_right"].indices == tuple(range(42, 48))
    assert REGION["nose"].indices == tuple(range(27, 36))
    assert len(region_landmarks(random_landmarks(0), REGION["mouth"])) == 20
    assert len(region_landmarks(random_landmarks(0), FULL_FACE)) == 68


def test_region_sets_disjoint_and_in_range():
    seen = set()
    for r in REGIONS:
        assert seen.isdisjoint(r.indices)
        assert all(0 <= i < N_LANDMARKS for i in r.indices)
        seen.update(r.indices)


def test_region_selection_keeps_order():
    lm = random_landmarks(2)
    np.testing.assert_array_equal(region_landmarks(lm, REGION["mouth"]), lm[48:68])


def test_regions_match_rendered_face_layout(face):
    lm = face.landmarks
    center = {name: region_landmarks(lm, r).mean(axis=0) for name, r in REGION.items()}
    # eyes above nose above mouth in the face's own frame (rotation is at most 0.35 rad)
    assert center["eye_left"][1] < center["mouth"][1] and center["eye_right"][1] < center["mouth"][1]
    assert center["nose"][1] < center["mouth"][1]
    assert np.linalg.norm(center["eye_left"] - center["eye_right"]) > 5


# ------------------------------------------------------------- similarity
def test_similarity_identity_and_shift():
    pts = random_landmarks(3)[:6]
    t = estimate_similarity(pts, pts)
    assert t.scale == pytest.approx(1, abs=1e-6) and t.rotation == pytest.approx(0, abs=1e-6)
    np.testing.assert_allclose(t.translation, (0, 0), atol=1e-6)
    t = estimate_similarity(pts, pts + np.array([5.0, -3.0]))
    assert t.scale == pytest.approx(1, abs=1e-9) and t.rotation == pytest.approx(0, abs=1e-9)
    np.testing.assert_allclose(t.translation, (5, -3), atol=1e-9)


def test_similarity_generate_then_recover():
    pts = np.random.default_rng(4).normal(size=(6, 2)) * 5
    truth = SimilarityTransform(1.7, 0.4, (3.0, 8.0))
    t = estimate_similarity(pts, truth.apply(pts))
    assert t.scale == pytest.approx(1.7, abs=1e-4)
    assert t.rotation == pytest.approx(0.4, abs=1e-4)
    np.testing.assert_allclose(t.translation, (3, 8), atol=1e-4)


@given(st.floats(0.2, 5.0), st.floats(-3.0, 3.0), st.floats(-50, 50), st.floats(-50, 50), st.integers(0, 999))
@settings(max_examples=50, deadline=None)
def test_similarity_exact_on_similar_point_sets(scale, rot, tx, ty, seed):
    pts = np.random.default_rng(seed).normal(size=(8, 2)) * 10
    dst = SimilarityTransform(scale, rot, (tx, ty)).apply(pts)
    t = estimate_similarity(pts, dst)
    assert np.max(np.abs(t.apply(pts) - dst)) <= 1e-6 * max(1.0, np.abs(dst).max())


@given(st.floats(0.2, 5.0), st.floats(-3.0, 3.0), st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=50, deadline=None)
def test_compose_with_inverse_is_identity(scale, rot, tx, ty):
    t = SimilarityTransform(scale, rot, (tx, ty))
    probe = np.random.default_rng(0).uniform(-100, 100, size=(10, 2))
    np.testing.assert_allclose(t.compose(t.inverse()).apply(probe), probe, atol=1e-5)
    np.testing.assert_allclose(t.inverse().compose(t).apply(probe), probe, atol=1e-5)


def test_similarity_rejects_coincident_points():
    with pytest.raises(ValueError, match="coincident"):
        estimate_similarity(np.ones((4, 2)), np.random.default_rng(0).normal(size=(4, 2)))


def test_similarity_scale_must_be_positive():
    with pytest.raises(ValueError):
        SimilarityTransform(0.0, 0.0, (0.0, 0.0))


# ------------------------------------------------------------ crop / place
@pytest.mark.parametrize("name", sorted(REGION))
def test_crop_then_place_round_trip_on_smooth_image(name, face):
    img = smooth_image(64, 64, seed=7)[None]
    crop, placement = crop_region(Tensor(img), face.landmarks, REGION[name])
    assert crop.shape == (1, 3) + REGION[name].crop_size
    canvas, mask = place_region(64, 64, crop, placement)
    covered = mask[0, 0] > 0
    assert covered.sum() > 20
    err = np.abs(canvas.data[0][:, covered] - img[0][:, covered]).mean()
    assert err < 0.02


def test_axis_aligned_region_has_zero_rotation(face):
    _, placement = crop_region(Tensor(np.zeros((1, 3, 64, 64))), face.landmarks, REGION["nose"])
    assert placement.rotation == 0.0


def test_doubling_landmarks_doubles_placement_scale(face):
    a = region_frame(face.landmarks, REGION["mouth"])
    b = region_frame(face.landmarks * 2, REGION["mouth"])
    assert b.scale == pytest.approx(2 * a.scale, rel=1e-12)


def test_degenerate_region_extent_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        crop_region(Tensor(np.zeros((1, 3, 8, 8))), np.full((N_LANDMARKS, 2), 4.0), REGION["eye_left"])


def test_identity_placement_of_full_canvas():
    crop = Tensor(np.random.default_rng(0).normal(size=(1, 3, 8, 8)))
    canvas, mask = place_region(8, 8, crop, SimilarityTransform(1.0, 0.0, (0.0, 0.0)))
    np.testing.assert_allclose(canvas.data, crop.data, atol=1e-12)
    assert np.all(mask == 1)


def test_offcanvas_placement_is_empty():
    crop = Tensor(np.ones((1, 3, 4, 4)))
    canvas, mask = place_region(8, 8, crop, SimilarityTransform(1.0, 0.0, (100.0, 100.0)))
    assert np.all(canvas.data == 0) and np.all(mask == 0)


def test_place_region_gradient_reaches_crop():
    crop = Tensor(np.ones((1, 3, 4, 4)), requires_grad=True)
    canvas, _ = place_region(16, 16, crop, SimilarityTransform(2.0, 0.3, (4.0, 3.0)))
    canvas.sum().backward()
    assert crop.grad is not None and np.all(crop.grad.sum(axis=(0, 1)) > 0)


# -------------------------------------------------------- shape adaptation
def test_adapt_identity():
    s = random_landmarks(5)
    np.testing.assert_allclose(adapt_landmark_shape(s, s), s, atol=1e-6)


def test_adapt_undoes_scale_and_shift():
    s = random_landmarks(6)
    d = s * 2.0 + np.array([7.0, -4.0])
    np.testing.assert_allclose(adapt_landmark_shape(d, s), s, atol=1e-5)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_adapt_matches_source_statistics_and_is_idempotent(a, b):
    d, s = random_landmarks(a), random_landmarks(b, 0, 200)
    out = adapt_landmark_shape(d, s)
    np.testing.assert_allclose(out.mean(axis=0), s.mean(axis=0), atol=1e-9)
    assert rms_spread(out) == pytest.approx(rms_spread(s), rel=1e-9)
    np.testing.assert_allclose(adapt_landmark_shape(out, s), out, atol=1e-6)


# -------------------------------------------------------------- file format
def test_landmark_file_round_trip(tmp_path):
    lm = random_landmarks(8)
    write_landmarks(tmp_path / "a.txt", lm)
    np.testing.assert_allclose(read_landmarks(tmp_path / "a.txt"), lm, atol=1e-6)


def test_landmark_file_wrong_line_count(tmp_path):
    (tmp_path / "a.txt").write_text("1 2\n" * 67)
    with pytest.raises(LandmarkFormatError, match="68"):
        read_landmarks(tmp_path / "a.txt")


def test_landmark_file_bad_line_is_named(tmp_path):
    lines = ["1 2"] * 68
    lines[40] = "1 two"
    (tmp_path / "a.txt").write_text("\n".join(lines))
    with pytest.raises(LandmarkFormatError, match=":41:"):
        read_landmarks(tmp_path / "a.txt")


def test_region_spec_scales_with_resolution():
    assert REGION["mouth"].scaled(128).crop_size == (32, 48)
    assert isinstance(REGION["mouth"].scaled(64), RegionSpec)
