import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.core.geometry import (
    alignment_residual,
    apply_pose,
    apply_similarity,
    apply_similarity_batch,
    compose_pose,
    invert_pose,
    quaternion_to_matrix,
    umeyama_align,
)
from src.core.trajectory import Trajectory, match_trajectories, read_trajectory, write_trajectory
from src.errors import DegenerateConfigurationError, InsufficientCorrespondencesError, InvalidInputError
from src.models import Pose, RotationQuaternion, SimilarityTransform


def random_rotation(rng) -> RotationQuaternion:
    return RotationQuaternion.from_xyzw(Rotation.random(random_state=rng.integers(1 << 31)).as_quat())


def random_pose(rng) -> Pose:
    return Pose(random_rotation(rng), rng.normal(size=3))


class TestQuaternions:
    def test_identity_matrix(self):
        np.testing.assert_array_equal(quaternion_to_matrix(RotationQuaternion.identity()), np.eye(3))

    def test_non_unit_rejected(self):
        with pytest.raises(InvalidInputError):
            quaternion_to_matrix(RotationQuaternion(1.0, 1.0, 0.0, 0.0))

    def test_matrix_is_orthonormal(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = quaternion_to_matrix(random_rotation(rng))
            np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
            assert np.linalg.det(r) == pytest.approx(1.0)


class TestPoses:
    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a = random_pose(rng)
            c = compose_pose(a, invert_pose(a))
            np.testing.assert_allclose(quaternion_to_matrix(c.rotation), np.eye(3), atol=1e-12)
            np.testing.assert_allclose(c.translation, 0.0, atol=1e-12)

    def test_compose_applies_right_first(self):
        rng = np.random.default_rng(2)
        a, b = random_pose(rng), random_pose(rng)
        p = rng.normal(size=(5, 3))
        np.testing.assert_allclose(apply_pose(compose_pose(a, b), p), apply_pose(a, apply_pose(b, p)), atol=1e-12)


class TestUmeyama:
    def test_recovers_similarity(self):
        rng = np.random.default_rng(3)
        truth = SimilarityTransform(2.5, random_rotation(rng), rng.normal(size=3))
        src = rng.normal(size=(20, 3))
        dst = apply_similarity_batch(truth, src)
        est = umeyama_align(src, dst, estimate_scale=True)
        assert est.scale == pytest.approx(2.5, abs=1e-9)
        np.testing.assert_allclose(apply_similarity_batch(est, src), dst, atol=1e-9)

    def test_recovers_random_similarities(self):
        rng = np.random.default_rng(30)
        for _ in range(1000):
            scale = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
            truth = SimilarityTransform(scale, random_rotation(rng), rng.uniform(-5.0, 5.0, size=3))
            src = rng.normal(size=(int(rng.integers(4, 30)), 3))
            est = umeyama_align(src, apply_similarity_batch(truth, src), estimate_scale=True)
            assert abs(est.scale - scale) <= 1e-9 * max(1.0, scale)
            np.testing.assert_allclose(
                quaternion_to_matrix(est.rotation), quaternion_to_matrix(truth.rotation), rtol=0, atol=1e-9
            )
            np.testing.assert_allclose(est.translation, truth.translation, rtol=0, atol=1e-9)

    def test_rigid_mode_keeps_unit_scale(self):
        rng = np.random.default_rng(4)
        truth = SimilarityTransform(1.0, random_rotation(rng), rng.normal(size=3))
        src = rng.normal(size=(10, 3))
        est = umeyama_align(src, apply_similarity_batch(truth, src), estimate_scale=False)
        assert est.scale == 1.0
        assert alignment_residual(est, src, apply_similarity_batch(truth, src)) < 1e-18

    def test_identity_on_equal_sets(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        est = umeyama_align(pts, pts)
        assert est.scale == pytest.approx(1.0)
        np.testing.assert_allclose(est.translation, 0.0, atol=1e-12)
        np.testing.assert_allclose(quaternion_to_matrix(est.rotation), np.eye(3), atol=1e-12)

    def test_reflection_never_returned(self):
        rng = np.random.default_rng(5)
        src = rng.normal(size=(12, 3))
        dst = src * np.array([1.0, 1.0, -1.0])
        est = umeyama_align(src, dst)
        assert np.linalg.det(quaternion_to_matrix(est.rotation)) == pytest.approx(1.0)

    def test_too_few_points(self):
        with pytest.raises(InsufficientCorrespondencesError):
            umeyama_align(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_size_mismatch(self):
        with pytest.raises(InsufficientCorrespondencesError):
            umeyama_align(np.zeros((4, 3)), np.zeros((5, 3)))

    def test_collinear_points(self):
        src = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
        with pytest.raises(DegenerateConfigurationError):
            umeyama_align(src, src)

    def test_similarity_maps_point(self):
        t = SimilarityTransform(2.0, RotationQuaternion.identity(), np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(apply_similarity(t, [1.0, 2.0, 3.0]), [3.0, 4.0, 6.0])


class TestTrajectory:
    def test_write_read_keeps_poses(self, tmp_path):
        rng = np.random.default_rng(6)
        traj = Trajectory.from_poses([random_pose(rng) for _ in range(4)], [0.0, 0.1, 0.2, 0.3])
        path = tmp_path / "traj.txt"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        np.testing.assert_array_equal(back.timestamps, traj.timestamps)
        for a, b in zip(traj.poses, back.poses):
            np.testing.assert_allclose(a.translation, b.translation, atol=1e-15)
            np.testing.assert_allclose(
                quaternion_to_matrix(a.rotation), quaternion_to_matrix(b.rotation), atol=1e-12
            )

    def test_match_by_timestamp(self):
        poses = [Pose() for _ in range(4)]
        a = Trajectory.from_poses(poses, [0.0, 1.0, 2.0, 3.0])
        b = Trajectory.from_poses(poses, [3.001, 2.0, 1.0, 0.0])
        ia, ib = match_trajectories(a, b)
        np.testing.assert_array_equal(ia, [0, 1, 2, 3])
        np.testing.assert_array_equal(ib, [3, 2, 1, 0])

    def test_falls_back_to_index_pairing(self):
        poses = [Pose() for _ in range(3)]
        a = Trajectory.from_poses(poses, [0.0, 1.0, 2.0])
        b = Trajectory.from_poses(poses, [100.0, 101.0, 102.0])
        ia, ib = match_trajectories(a, b)
        np.testing.assert_array_equal(ia, ib)

    def test_unequal_lengths_without_matches_rejected(self):
        a = Trajectory.from_poses([Pose() for _ in range(4)], [0.0, 1.0, 2.0, 3.0])
        b = Trajectory.from_poses([Pose() for _ in range(5)], [100.0, 101.0, 102.0, 103.0, 104.0])
        with pytest.raises(InsufficientCorrespondencesError):
            match_trajectories(a, b)
        with pytest.raises(InsufficientCorrespondencesError):
            match_trajectories(b, a)

    def test_unequal_lengths_with_matches_accepted(self):
        a = Trajectory.from_poses([Pose() for _ in range(4)], [0.0, 1.0, 2.0, 3.0])
        b = Trajectory.from_poses([Pose() for _ in range(6)], [0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
        ia, ib = match_trajectories(a, b)
        np.testing.assert_array_equal(ia, [0, 1, 2, 3])
        np.testing.assert_array_equal(ib, [0, 1, 2, 3])

    def test_too_short(self):
        a = Trajectory.from_poses([Pose(), Pose()])
        with pytest.raises(InsufficientCorrespondencesError):
            match_trajectories(a, a)
