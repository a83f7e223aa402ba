"""Roll/side estimation, pose normalisation, and mirror permutations.

Roll convention hand cases (d = nose tip - bridge, roll = atan2(dx, dy) in
degrees): an upright face has the tip straight below the bridge in image
coordinates, d = (0, +), roll 0; d = (1, 1) gives 45; d = (1, 0) gives 90;
an upside-down face has d = (0, -) and roll 180.  Rotating a shape by angle
a about any centre adds a to its roll.
"""

import numpy as np
import pytest

from facecsr import (
    BoundingBox,
    CascadeModel,
    ConfigError,
    ContextConfig,
    FeatureConfig,
    FormatError,
    GrayImage,
    InvalidInputError,
    LEFT,
    NOT_APPLICABLE,
    PROFILE,
    PoseEstimate,
    RIGHT,
    SEMI_FRONTAL,
    Shape,
    WeakRegressor,
    apply_permutation,
    apply_transform,
    back_transform_landmarks,
    estimate_pose,
    feature_length,
    flip_shape,
    identity,
    identity_permutation,
    load_permutation,
    mirror_permutation_68,
    normalize_pose,
    permutation_from_pairs,
    roll_from_landmarks,
    rotation,
    rough_landmarks,
    save_permutation,
    yaw_side,
)

_BRIDGE, _TIP = 27, 33


def _shape_with_nose(d, n=68, seed=50):
    """Random n-point shape whose tip - bridge vector equals d."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(10.0, 50.0, size=(n, 2))
    pts[_TIP] = pts[_BRIDGE] + np.asarray(d, dtype=float)
    return Shape(pts)


def _profile_shape(x3, x20, seed=51):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(10.0, 50.0, size=(39, 2))
    pts[2, 0] = x3
    pts[19, 0] = x20
    return Shape(pts)


class TestRollFromLandmarks:
    def test_hand_cases(self):
        np.testing.assert_allclose(roll_from_landmarks(_shape_with_nose((0, 5))), 0.0)
        np.testing.assert_allclose(roll_from_landmarks(_shape_with_nose((3, 3))), 45.0)
        np.testing.assert_allclose(roll_from_landmarks(_shape_with_nose((4, 0))), 90.0)
        np.testing.assert_allclose(roll_from_landmarks(_shape_with_nose((0, -20))), 180.0)
        np.testing.assert_allclose(roll_from_landmarks(_shape_with_nose((-3, 3))), -45.0)

    def test_rotation_adds_to_roll(self):
        rng = np.random.default_rng(52)
        for _ in range(20):
            base = float(rng.uniform(-60, 60))
            extra = float(rng.uniform(-100, 100))
            d = (np.sin(np.radians(base)), np.cos(np.radians(base)))
            shape = _shape_with_nose(d, seed=int(rng.integers(1 << 30)))
            turned = apply_transform(shape, rotation(extra, (31.5, 31.5)))
            want = (base + extra + 180.0) % 360.0 - 180.0
            if want == -180.0:
                want = 180.0
            np.testing.assert_allclose(roll_from_landmarks(turned), want, atol=1e-9)

    def test_degenerate_nose_warns(self):
        with pytest.warns(UserWarning):
            assert roll_from_landmarks(_shape_with_nose((0, 0))) == 0.0

    def test_wrong_point_count(self):
        with pytest.raises(InvalidInputError):
            roll_from_landmarks(Shape(np.zeros((39, 2))))


class TestYawSide:
    def test_ordering_convention(self):
        assert yaw_side(_profile_shape(10.0, 20.0)) == RIGHT
        assert yaw_side(_profile_shape(20.0, 10.0)) == LEFT

    def test_invert_flag(self):
        assert yaw_side(_profile_shape(10.0, 20.0), invert=True) == LEFT
        assert yaw_side(_profile_shape(20.0, 10.0), invert=True) == RIGHT

    def test_tie_breaks_left(self):
        assert yaw_side(_profile_shape(15.0, 15.0)) == LEFT
        assert yaw_side(_profile_shape(15.0, 15.0), invert=True) == LEFT

    def test_wrong_point_count(self):
        with pytest.raises(InvalidInputError):
            yaw_side(Shape(np.zeros((68, 2))))


class TestEstimatePose:
    def test_per_layout_fields(self):
        roll, side = estimate_pose(_shape_with_nose((3, 3)), SEMI_FRONTAL)
        assert (round(roll), side) == (45, NOT_APPLICABLE)
        roll, side = estimate_pose(_profile_shape(10.0, 20.0), PROFILE)
        assert (roll, side) == (0.0, RIGHT)

    def test_unknown_layout(self):
        with pytest.raises(InvalidInputError):
            estimate_pose(_shape_with_nose((0, 5)), "three-quarter")


class TestPoseEstimate:
    def test_side_layout_consistency(self):
        PoseEstimate(SEMI_FRONTAL, 0.0, NOT_APPLICABLE, identity())
        PoseEstimate(PROFILE, 0.0, LEFT, identity())
        with pytest.raises(InvalidInputError):
            PoseEstimate(SEMI_FRONTAL, 0.0, LEFT, identity())
        with pytest.raises(InvalidInputError):
            PoseEstimate(PROFILE, 0.0, NOT_APPLICABLE, identity())
        with pytest.raises(InvalidInputError):
            PoseEstimate("upside-down", 0.0, LEFT, identity())


class TestRoughLandmarks:
    def test_stage_count_gate(self):
        cfg = FeatureConfig(patch_size=4, scales=(1.0,),
                            context=ContextConfig(grid_cells=2, resample_size=8))
        n_f = feature_length(cfg, 2)
        stage = WeakRegressor(np.zeros((4, n_f)), np.zeros(4))
        mean = Shape(np.array([[0.25, 0.25], [0.75, 0.75]]))
        image = GrayImage(np.zeros((16, 16)))
        box = BoundingBox(2.0, 2.0, 8.0, 8.0)
        one = CascadeModel(stages=(stage,), mean=mean, feature_config=cfg, lam=1.0)
        with pytest.raises(ConfigError):
            rough_landmarks(one, image, box)
        two = CascadeModel(stages=(stage, stage), mean=mean, feature_config=cfg, lam=1.0)
        out = rough_landmarks(two, image, box)
        assert out.num_points == 2


class TestNormalizePose:
    def test_small_roll_keeps_image(self):
        image = GrayImage(np.random.default_rng(53).uniform(size=(32, 32)))
        rough = _shape_with_nose((np.sin(np.radians(10)), np.cos(np.radians(10))))
        out, pose = normalize_pose(image, rough, SEMI_FRONTAL)
        assert out is image
        np.testing.assert_allclose(pose.transform.matrix(), np.eye(3))
        np.testing.assert_allclose(pose.roll, 10.0, atol=1e-9)

    def test_threshold_is_strict(self):
        image = GrayImage(np.zeros((32, 32)))
        rough = _shape_with_nose((np.sin(np.radians(45)), np.cos(np.radians(45))))
        out, pose = normalize_pose(image, rough, SEMI_FRONTAL, roll_threshold=45.0)
        assert out is image

    def test_large_roll_derotates(self):
        image = GrayImage(np.random.default_rng(54).uniform(size=(40, 40)))
        angle = 90.0
        rough = _shape_with_nose((np.sin(np.radians(angle)), np.cos(np.radians(angle))))
        out, pose = normalize_pose(image, rough, SEMI_FRONTAL)
        assert out is not image
        fixed = apply_transform(rough, pose.transform)
        np.testing.assert_allclose(roll_from_landmarks(fixed), 0.0, atol=1e-9)

    def test_derotation_is_by_quarter_turns(self):
        image = GrayImage(np.random.default_rng(63).uniform(size=(40, 40)))
        for angle, residual in ((120.0, 30.0), (60.0, -30.0), (-100.0, -10.0),
                                (170.0, -10.0)):
            rough = _shape_with_nose(
                (np.sin(np.radians(angle)), np.cos(np.radians(angle))))
            out, pose = normalize_pose(image, rough, SEMI_FRONTAL)
            fixed = apply_transform(rough, pose.transform)
            np.testing.assert_allclose(roll_from_landmarks(fixed), residual,
                                       atol=1e-9)
            # quarter turns permute pixels, they never interpolate
            np.testing.assert_allclose(np.sort(out.pixels, axis=None),
                                       np.sort(image.pixels, axis=None),
                                       atol=1e-12)

    def test_custom_threshold(self):
        image = GrayImage(np.zeros((32, 32)))
        over = _shape_with_nose((np.sin(np.radians(60)), np.cos(np.radians(60))))
        out, _ = normalize_pose(image, over, SEMI_FRONTAL, roll_threshold=50.0)
        assert out is not image
        # a roll whose nearest quarter turn is zero stays untouched even
        # past the threshold: there is nothing lossless to do about it
        slight = _shape_with_nose((np.sin(np.radians(30)), np.cos(np.radians(30))))
        out, pose = normalize_pose(image, slight, SEMI_FRONTAL, roll_threshold=20.0)
        assert out is image and pose.transform.is_identity

    def test_profile_left_untouched(self):
        image = GrayImage(np.random.default_rng(55).uniform(size=(32, 32)))
        out, pose = normalize_pose(image, _profile_shape(20.0, 10.0), PROFILE)
        assert out is image and pose.side == LEFT
        assert not pose.transform.flips_orientation

    def test_profile_right_mirrors(self):
        image = GrayImage(np.random.default_rng(56).uniform(size=(32, 48)))
        out, pose = normalize_pose(image, _profile_shape(10.0, 20.0), PROFILE)
        assert pose.side == RIGHT
        assert pose.transform.flips_orientation
        np.testing.assert_allclose(out.pixels, image.pixels[:, ::-1])

    def test_side_invert_passthrough(self):
        image = GrayImage(np.zeros((32, 32)))
        out, pose = normalize_pose(image, _profile_shape(10.0, 20.0), PROFILE,
                                   side_invert=True)
        assert out is image and pose.side == LEFT


class TestBackTransformLandmarks:
    def test_rotation_round_trip(self):
        image = GrayImage(np.random.default_rng(57).uniform(size=(48, 48)))
        rough = _shape_with_nose((np.sin(np.radians(120)), np.cos(np.radians(120))),
                                 seed=58)
        _, pose = normalize_pose(image, rough, SEMI_FRONTAL)
        truth = _shape_with_nose((1.0, 2.0), seed=59)
        normalised = apply_transform(truth, pose.transform)
        back = back_transform_landmarks(normalised, pose)
        np.testing.assert_allclose(back.points, truth.points, atol=1e-9)

    def test_mirror_round_trip_with_permutation(self):
        image = GrayImage(np.random.default_rng(60).uniform(size=(40, 40)))
        truth = _profile_shape(10.0, 20.0, seed=61)
        _, pose = normalize_pose(image, truth, PROFILE)
        assert pose.side == RIGHT
        perm = permutation_from_pairs(((1, 5), (2, 4), (10, 39)), 39)
        # a perfect fine model on the mirrored image reports the mirrored,
        # re-labelled annotation; mapping back must recover the truth exactly
        annotated = apply_permutation(apply_transform(truth, pose.transform), perm)
        back = back_transform_landmarks(annotated, pose, perm)
        np.testing.assert_allclose(back.points, truth.points, atol=1e-9)

    def test_left_face_is_identity(self):
        image = GrayImage(np.zeros((32, 32)))
        truth = _profile_shape(20.0, 10.0, seed=62)
        _, pose = normalize_pose(image, truth, PROFILE)
        back = back_transform_landmarks(truth, pose, identity_permutation(39))
        np.testing.assert_allclose(back.points, truth.points)


class TestPermutations:
    def test_mirror_68_is_involution_with_29_pairs(self):
        perm = mirror_permutation_68()
        np.testing.assert_array_equal(perm[perm], identity_permutation(68))
        assert int(np.sum(perm != identity_permutation(68))) == 58
        # spot checks (0-based): jaw corner 0 <-> 16, eye corners 36 <-> 45,
        # nose line 27..30 fixed, chin 8 fixed
        assert perm[0] == 16 and perm[36] == 45 and perm[8] == 8
        np.testing.assert_array_equal(perm[27:31], np.arange(27, 31))

    def test_pairs_validation(self):
        with pytest.raises(InvalidInputError):
            permutation_from_pairs(((0, 5),), 10)
        with pytest.raises(InvalidInputError):
            permutation_from_pairs(((1, 11),), 10)
        with pytest.raises(InvalidInputError):
            permutation_from_pairs(((1, 2), (2, 3)), 10)

    def test_apply_permutation_semantics(self):
        shape = Shape(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
        out = apply_permutation(shape, np.array([2, 0, 1]))
        np.testing.assert_array_equal(out.points, [[2, 2], [0, 0], [1, 1]])

    def test_apply_permutation_validation(self):
        shape = Shape(np.zeros((3, 2)))
        with pytest.raises(InvalidInputError):
            apply_permutation(shape, np.array([0, 1]))
        with pytest.raises(InvalidInputError):
            apply_permutation(shape, np.array([0, 0, 2]))

    def test_save_load_round_trip(self, tmp_path):
        perm = mirror_permutation_68()
        path = tmp_path / "mirror.txt"
        save_permutation(perm, path)
        np.testing.assert_array_equal(load_permutation(path, 68), perm)
        first = path.read_text().splitlines()[0]
        assert first == "1 17"

    def test_save_rejects_non_involution(self, tmp_path):
        with pytest.raises(InvalidInputError):
            save_permutation(np.array([1, 2, 0]), tmp_path / "bad.txt")

    def test_load_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "perm.txt"
        path.write_text("# comment\n\n1 5\n2 4 9\n")
        with pytest.raises(FormatError) as info:
            load_permutation(path, 10)
        assert info.value.line == 4
        path.write_text("1 x\n")
        with pytest.raises(FormatError) as info:
            load_permutation(path, 10)
        assert info.value.line == 1
        path.write_text("1 99\n")
        with pytest.raises(FormatError):
            load_permutation(path, 10)


class TestFlipShape:
    def test_coordinates_mirror(self):
        shape = Shape(np.array([[0.0, 1.0], [9.0, 2.0]]))
        out = flip_shape(shape, 10.0)
        np.testing.assert_allclose(out.points, [[9.0, 1.0], [0.0, 2.0]])

    def test_relabelling(self):
        shape = Shape(np.array([[0.0, 1.0], [9.0, 2.0]]))
        out = flip_shape(shape, 10.0, permutation_from_pairs(((1, 2),), 2))
        np.testing.assert_allclose(out.points, [[0.0, 2.0], [9.0, 1.0]])

    def test_double_flip_identity(self):
        rng = np.random.default_rng(63)
        shape = Shape(rng.uniform(0, 9, size=(68, 2)))
        perm = mirror_permutation_68()
        twice = flip_shape(flip_shape(shape, 10.0, perm), 10.0, perm)
        np.testing.assert_allclose(twice.points, shape.points, atol=1e-12)
