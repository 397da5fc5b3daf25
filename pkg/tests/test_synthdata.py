import numpy as np
import pytest

from facereenact.synthdata import (APPEARANCE_RANGES, EXPRESSION_FIELDS, POSE_FIELDS, POSE_RANGES, FaceDataset,
                                   FaceParams, cross_pair, identity_appearance, random_frame, render, sample_pair)


@pytest.fixture(scope="module")
def params():
    return random_frame(identity_appearance(11), np.random.default_rng(0))


def test_render_is_deterministic(params):
    a, b = render(params), render(params)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.landmarks, b.landmarks)


def test_render_output_contract(params):
    s = render(params, 48, 64)
    assert s.image.shape == (3, 48, 64) and s.image.dtype == np.float32
    assert s.image.min() >= -1 and s.image.max() <= 1
    assert s.landmarks.shape == (68, 2) and np.all(np.isfinite(s.landmarks))


def test_mouth_open_widens_inner_lip_gap(params):
    gaps = []
    for m in np.linspace(0, 1, 6):
        lm = render(params.with_expression(mouth_open=m)).landmarks
        inner = lm[60:68]
        gaps.append(inner[:, 1].max() - inner[:, 1].min())
    assert all(b > a for a, b in zip(gaps, gaps[1:]))


def test_translation_shifts_every_landmark(params):
    base = params.with_pose(tx=0.0)
    shifted = params.with_pose(tx=5.0 / 64)
    d = render(shifted).landmarks - render(base).landmarks
    np.testing.assert_allclose(d[:, 0], 5.0, atol=1e-9)
    np.testing.assert_allclose(d[:, 1], 0.0, atol=1e-9)


def test_out_of_range_params_rejected(params):
    with pytest.raises(ValueError, match="mouth_open"):
        render(params.with_expression(mouth_open=1.5))
    with pytest.raises(ValueError, match="rotation"):
        render(params.with_pose(rotation=1.0))


def test_pair_shares_appearance_exactly():
    src, drv = sample_pair(5, 0)
    np.testing.assert_array_equal(src.params.appearance, drv.params.appearance)
    assert not np.array_equal(src.params.pose, drv.params.pose)


def test_different_identities_differ():
    assert not np.array_equal(identity_appearance(1), identity_appearance(2))


def test_appearance_within_declared_ranges():
    for seed in range(50):
        a = identity_appearance(seed)
        assert np.all(a >= APPEARANCE_RANGES[:, 0]) and np.all(a <= APPEARANCE_RANGES[:, 1])


def test_pose_sampling_covers_declared_range():
    app = identity_appearance(0)
    rng = np.random.default_rng(1)
    poses = np.array([random_frame(app, rng).pose for _ in range(2000)])
    span = POSE_RANGES[:, 1] - POSE_RANGES[:, 0]
    assert np.all(poses.min(axis=0) <= POSE_RANGES[:, 0] + 0.05 * span)
    assert np.all(poses.max(axis=0) >= POSE_RANGES[:, 1] - 0.05 * span)
    # pairwise pose differences span the full declared width
    diffs = np.abs(poses[::2] - poses[1::2])
    assert np.all(diffs.max(axis=0) >= 0.9 * span)


def test_cross_pair_identities():
    src, drv = cross_pair(3, 4, 0)
    np.testing.assert_array_equal(src.params.appearance, identity_appearance(3))
    np.testing.assert_array_equal(drv.params.appearance, identity_appearance(4))
    again = cross_pair(3, 4, 0)
    np.testing.assert_array_equal(src.image, again[0].image)
    with pytest.raises(ValueError):
        cross_pair(3, 3, 0)


def test_cross_pair_landmarks_follow_driving_identity():
    _, drv = cross_pair(3, 4, 0)
    rerender = render(FaceParams(identity_appearance(4), drv.params.pose, drv.params.expression))
    np.testing.assert_array_equal(rerender.landmarks, drv.landmarks)


def test_parameter_round_trip_reproduces_image():
    ds = FaceDataset(2, 3, seed=9)
    s = ds.frame(1, 2)
    p = FaceParams(s.params.appearance.copy(), s.params.pose.copy(), s.params.expression.copy())
    np.testing.assert_array_equal(render(p).image, s.image)


def test_dataset_is_pure_function_of_seed_and_step():
    a, b = FaceDataset(10, 4, seed=2), FaceDataset(10, 4, seed=2)
    assert a.batch_indices(17, 3) == b.batch_indices(17, 3)
    np.testing.assert_array_equal(a.frame(3, 1).image, b.frame(3, 1).image)
    for ident, s, d in a.batch_indices(5, 8):
        assert s != d and 0 <= ident < 10


def test_identity_offset_gives_disjoint_identities():
    train = FaceDataset(5, 2, seed=0)
    held = FaceDataset(5, 2, seed=0, identity_offset=5)
    seeds = {train.identity_seed(i) for i in range(5)}
    assert seeds.isdisjoint({held.identity_seed(i) for i in range(5)})


def test_field_names():
    assert POSE_FIELDS == ("shear", "rotation", "tx", "ty", "scale")
    assert EXPRESSION_FIELDS[:3] == ("eye_open_left", "eye_open_right", "mouth_open")
