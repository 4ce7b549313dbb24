import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelkit.errors import (DegenerateInputError, NoConsensusError,
                            ValidationError)
from skelkit.geom import (CameraModel, Correspondence, Homography, JointSet2D,
                          JointSet3D, Pose3, apply_homography,
                          estimate_homography_dlt, estimate_homography_ransac,
                          pairs_to_arrays, project_points,
                          symmetric_transfer_error, warp_frame)

from conftest import inlier_outlier_pairs, random_homography

SQUARE = np.array([[0.0, 0.0], [100.0, 0.0], [100.0, 100.0], [0.0, 100.0]])


def make_cam(**kw):
    args = dict(fx=100.0, fy=100.0, cx=360.0, cy=240.0, width=720, height=480)
    args.update(kw)
    return CameraModel(**args)


class TestPose3:
    def test_identity_apply(self):
        p = np.array([[1.0, 2.0, 3.0]])
        assert np.array_equal(Pose3.identity().apply(p), p)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValidationError):
            Pose3(np.eye(3) * 2.0, np.zeros(3))

    def test_rejects_reflection(self):
        r = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError):
            Pose3(r, np.zeros(3))

    def test_compose_matches_matrix_product(self, rng):
        def rand_pose():
            q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
            if np.linalg.det(q) < 0:
                q[:, 0] *= -1
            return Pose3(q, rng.normal(size=3))

        a, b = rand_pose(), rand_pose()
        assert np.allclose((a.compose(b)).matrix(), a.matrix() @ b.matrix())

    def test_compose_associative(self, rng):
        def rand_pose():
            q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
            if np.linalg.det(q) < 0:
                q[:, 0] *= -1
            return Pose3(q, rng.normal(size=3))

        a, b, c = rand_pose(), rand_pose(), rand_pose()
        m1 = a.compose(b.compose(c)).matrix()
        m2 = a.compose(b).compose(c).matrix()
        assert np.allclose(m1, m2, atol=1e-12)

    def test_inverse_round_trip(self, rng):
        q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        pose = Pose3(q, rng.normal(size=3))
        pts = rng.normal(size=(5, 3))
        assert np.allclose(pose.inverse().apply(pose.apply(pts)), pts)

    def test_from_matrix_flat16(self):
        pose = Pose3.from_matrix(np.eye(4).ravel().tolist())
        assert np.array_equal(pose.translation, np.zeros(3))


class TestCameraModel:
    def test_principal_point_bounds(self):
        with pytest.raises(ValidationError):
            make_cam(cx=720.0)

    def test_negative_focal(self):
        with pytest.raises(ValidationError):
            make_cam(fx=-1.0)


class TestProjectPoints:
    def test_principal_axis_point_hits_principal_point(self):
        js = project_points(JointSet3D([[0, 0, 2]]), make_cam())
        assert np.array_equal(js.coords, [[360.0, 240.0]])
        assert js.visible.all()

    def test_pinhole_arithmetic(self):
        # u = 100 * (1/2) + 360 = 410
        js = project_points(JointSet3D([[1, 0, 2]]), make_cam())
        assert np.allclose(js.coords, [[410.0, 240.0]])

    def test_behind_camera_flagged_invisible(self):
        js = project_points(JointSet3D([[0, 0, -1]]), make_cam())
        assert not js.visible[0]
        assert np.isfinite(js.coords).all()

    def test_nonfinite_input_rejected(self):
        with pytest.raises(ValidationError):
            project_points(JointSet3D([[np.nan, 0, 2]]), make_cam())

    def test_input_invisibility_preserved(self):
        js3 = JointSet3D([[0, 0, 2], [0, 0, 2]], visible=[True, False])
        js = project_points(js3, make_cam())
        assert list(js.visible) == [True, False]

    def test_projection_monotone_in_depth(self):
        # fixed (x, y), z shrinking toward the camera: |u - cx| nondecreasing
        zs = np.linspace(5.0, 0.5, 20)
        pts = JointSet3D(np.c_[np.ones_like(zs), np.zeros_like(zs), zs])
        us = project_points(pts, make_cam()).coords[:, 0]
        offsets = np.abs(us - 360.0)
        assert (np.diff(offsets) >= -1e-12).all()


class TestDlt:
    def test_identity(self):
        pairs = np.c_[SQUARE, SQUARE]
        h = estimate_homography_dlt(pairs)
        assert np.allclose(h.h, np.eye(3), atol=1e-9)

    def test_pure_translation_exact(self):
        pairs = np.c_[SQUARE, SQUARE + [5.0, 0.0]]
        h = estimate_homography_dlt(pairs)
        expected = np.array([[1, 0, 5], [0, 1, 0], [0, 0, 1.0]])
        assert np.allclose(h.h, expected, atol=1e-9)

    def test_three_pairs_rejected(self):
        with pytest.raises(DegenerateInputError) as exc:
            estimate_homography_dlt(np.c_[SQUARE[:3], SQUARE[:3]])
        assert exc.value.kind == "too_few_pairs"

    def test_collinear_minimal_sample_rejected(self):
        src = np.array([[0, 0], [1, 1], [2, 2], [5, 0]], dtype=float)
        with pytest.raises(DegenerateInputError) as exc:
            estimate_homography_dlt(np.c_[src, src])
        assert exc.value.kind == "collinear"

    def test_all_collinear_large_set_rejected(self):
        src = np.c_[np.linspace(0, 100, 10), np.linspace(0, 100, 10)]
        with pytest.raises(DegenerateInputError):
            estimate_homography_dlt(np.c_[src, src])

    def test_exact_on_clean_pairs(self, rng):
        for _ in range(10):
            h_true = random_homography(rng)
            src = rng.uniform(0, 500, (12, 2))
            pairs = np.c_[src, h_true.transform(src)]
            h = estimate_homography_dlt(pairs)
            err = symmetric_transfer_error(h, src, h_true.transform(src))
            assert err.max() <= 1e-6

    def test_accepts_correspondence_objects(self):
        pairs = [Correspondence(s, s + [5, 0]) for s in SQUARE]
        h = estimate_homography_dlt(pairs)
        assert np.allclose(h.h[0, 2], 5.0, atol=1e-9)


class TestRansac:
    def test_noise_free_total_consensus(self, rng):
        h_true = random_homography(rng)
        src = rng.uniform(0, 500, (20, 2))
        pairs = np.c_[src, h_true.transform(src)]
        h, mask = estimate_homography_ransac(pairs, 1.0, max_iters=200, seed=7)
        assert mask.all()
        err = symmetric_transfer_error(h, src, h_true.transform(src))
        assert err.max() <= 1e-6

    def test_outlier_recovery(self, rng):
        h_true = random_homography(rng)
        pairs, is_inlier = inlier_outlier_pairs(rng, h_true)
        h, mask = estimate_homography_ransac(pairs, 1.0, max_iters=500, seed=3)
        recall = (mask & is_inlier).sum() / is_inlier.sum()
        assert recall >= 0.95
        err = symmetric_transfer_error(h, pairs[is_inlier, :2],
                                       pairs[is_inlier, 2:4])
        assert err.mean() <= 0.5

    def test_deterministic_given_seed(self, rng):
        h_true = random_homography(rng)
        pairs, _ = inlier_outlier_pairs(rng, h_true)
        r1 = estimate_homography_ransac(pairs, 1.0, max_iters=300, seed=11)
        r2 = estimate_homography_ransac(pairs, 1.0, max_iters=300, seed=11)
        assert r1[0].h.tobytes() == r2[0].h.tobytes()
        assert r1[1].tobytes() == r2[1].tobytes()

    def test_no_consensus_raises(self, rng):
        # every minimal sample is degenerate: all source points collinear
        src = np.c_[np.linspace(0, 100, 30), np.linspace(0, 100, 30)]
        pairs = np.c_[src, rng.uniform(0, 500, (30, 2))]
        with pytest.raises(NoConsensusError):
            estimate_homography_ransac(pairs, 1.0, max_iters=50, seed=0)

    def test_threshold_must_be_positive(self):
        with pytest.raises(ValidationError):
            estimate_homography_ransac(np.c_[SQUARE, SQUARE], 0.0)


class TestApplyHomography:
    def test_identity_unchanged(self, rng):
        pts = JointSet2D(rng.uniform(0, 100, (8, 2)))
        out = apply_homography(Homography.identity(), pts)
        assert np.array_equal(out.coords, pts.coords)

    def test_translation(self):
        out = apply_homography(Homography.translation(5, 0),
                               JointSet2D([[10.0, 10.0]]))
        assert np.allclose(out.coords, [[15.0, 10.0]])

    def test_scale(self):
        out = apply_homography(Homography(np.diag([2.0, 2.0, 1.0])),
                               JointSet2D([[10.0, 10.0]]))
        assert np.allclose(out.coords, [[20.0, 20.0]])

    def test_point_at_infinity_goes_invisible(self):
        h = Homography(np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 1.0]]))
        out = apply_homography(h, JointSet2D([[1.0, 0.0]]))  # w = 0
        assert not out.visible[0]
        assert np.isfinite(out.coords).all()

    def test_invisibility_passes_through(self):
        pts = JointSet2D([[1.0, 1.0], [2.0, 2.0]], visible=[False, True])
        out = apply_homography(Homography.translation(1, 1), pts)
        assert list(out.visible) == [False, True]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_round_trip_property(self, seed):
        rng = np.random.default_rng(seed)
        h = random_homography(rng)
        pts = JointSet2D(rng.uniform(0, 500, (10, 2)))
        back = apply_homography(h.inverse(), apply_homography(h, pts))
        assert np.abs(back.coords - pts.coords).max() <= 1e-6


class TestWarpFrame:
    def test_identity_byte_identical(self, rng):
        frame = rng.integers(0, 256, (24, 32, 3), dtype=np.uint8)
        assert np.array_equal(warp_frame(Homography.identity(), frame), frame)

    def test_integer_translation_moves_single_pixel(self):
        frame = np.zeros((20, 20, 3), dtype=np.uint8)
        frame[5, 7] = 255
        # warp maps source (7,5) to destination (10,9)
        out = warp_frame(Homography.translation(3, 4), frame)
        assert (out[9, 10] == 255).all()
        out[9, 10] = 0
        assert not out.any()

    def test_out_of_bounds_all_black(self):
        frame = np.full((10, 10, 3), 200, dtype=np.uint8)
        out = warp_frame(Homography.translation(1000, 1000), frame)
        assert not out.any()

    def test_rejects_non_uint8(self):
        with pytest.raises(ValidationError):
            warp_frame(Homography.identity(), np.zeros((4, 4, 3)))


class TestHomographyType:
    def test_normalized_last_entry(self):
        h = Homography(np.diag([2.0, 2.0, 2.0]))
        assert h.h[2, 2] == 1.0

    def test_singular_rejected(self):
        with pytest.raises(ValidationError):
            Homography(np.zeros((3, 3)))

    def test_pairs_to_arrays_rejects_nan(self):
        with pytest.raises(ValidationError):
            pairs_to_arrays(np.array([[0, 0, np.nan, 0]]))
