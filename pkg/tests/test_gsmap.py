import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.core.geometry import quaternion_to_matrix
from src.errors import InvalidInputError
from src.gsmap.camera import (
    DepthFrame,
    Frame,
    PixelEmbeddingFrame,
    backproject,
    init_map_from_frames,
    init_primitive,
    ray_aligned_rotation,
)
from src.gsmap.gaussian_map import (
    GaussianMap,
    insert_batch,
    query_neighbors,
    query_neighbors_bruteforce,
    transform_map,
)
from src.gsmap.io import read_embedding_raster, read_map, sidecar_path, write_embedding_raster, write_map
from src.gsmap.primitives import GaussianPrimitive, covariance
from src.gsmap.semantics import associate_semantics, nearest_primitives
from src.models import CameraIntrinsics, Pose, RotationQuaternion, SimilarityTransform


@pytest.fixture
def small_camera() -> CameraIntrinsics:
    return CameraIntrinsics(fx=4.0, fy=4.0, cx=2.0, cy=2.0, width=4, height=4)


def random_map(rng, n: int, extent: float = 2.0) -> GaussianMap:
    quats = Rotation.random(n, random_state=rng.integers(1 << 31)).as_quat()
    gmap = GaussianMap()
    gmap.insert_arrays(
        means=rng.uniform(-extent, extent, size=(n, 3)),
        scales=rng.uniform(0.02, 0.2, size=(n, 3)),
        rotations=quats[:, [3, 0, 1, 2]],
        opacities=rng.uniform(0.1, 0.9, size=n),
        colors=rng.uniform(size=(n, 3)),
    )
    return gmap


class TestPrimitive:
    def test_axis_aligned_covariance(self):
        g = GaussianPrimitive(np.zeros(3), np.array([1.0, 2.0, 3.0]), RotationQuaternion(), 0.5, np.zeros(3))
        np.testing.assert_allclose(covariance(g), np.diag([1.0, 4.0, 9.0]))

    def test_rejects_bad_opacity(self):
        with pytest.raises(InvalidInputError):
            GaussianPrimitive(np.zeros(3), np.ones(3), RotationQuaternion(), 1.5, np.zeros(3))

    def test_rejects_non_unit_feature(self):
        with pytest.raises(InvalidInputError):
            GaussianPrimitive(np.zeros(3), np.ones(3), RotationQuaternion(), 0.5, np.zeros(3), np.array([2.0, 0.0]))


class TestNeighbors:
    def test_self_retrieval(self):
        gmap = random_map(np.random.default_rng(0), 50)
        for i in range(len(gmap)):
            assert i in query_neighbors(gmap, gmap.means[i])

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        gmap = random_map(rng, 1000, extent=1.0)
        for x in rng.uniform(-1.2, 1.2, size=(100, 3)):
            assert query_neighbors(gmap, x) == query_neighbors_bruteforce(gmap, x)

    def test_matches_bruteforce_at_scale(self):
        rng = np.random.default_rng(7)
        n = 100_000
        means = rng.uniform(-5.0, 5.0, size=(n, 3))
        scales = rng.uniform(0.01, 0.1, size=(n, 3))
        quats = Rotation.random(n, random_state=8).as_quat()[:, [3, 0, 1, 2]]
        prims = [
            GaussianPrimitive(means[i], scales[i], RotationQuaternion.from_array(quats[i]), 0.5, np.full(3, 0.5))
            for i in range(n)
        ]
        gmap = insert_batch(GaussianMap(), prims[: n // 2])
        insert_batch(gmap, prims[n // 2 :])
        assert len(gmap) == n
        near = means[rng.integers(0, n, size=150)] + rng.normal(scale=0.05, size=(150, 3))
        for x in np.concatenate([near, rng.uniform(-5.0, 5.0, size=(50, 3))]):
            assert query_neighbors(gmap, x) == query_neighbors_bruteforce(gmap, x)

    def test_empty_map(self):
        assert query_neighbors(GaussianMap(), [0.0, 0.0, 0.0]) == []

    def test_insert_keeps_order(self):
        prims = [
            GaussianPrimitive(np.array([float(i), 0, 0]), np.full(3, 0.1), RotationQuaternion(), 0.5, np.zeros(3))
            for i in range(3)
        ]
        gmap = insert_batch(GaussianMap(), prims)
        np.testing.assert_array_equal(gmap.means[:, 0], [0.0, 1.0, 2.0])
        assert query_neighbors(gmap, [1.0, 0.0, 0.0]) == [1]


class TestTransform:
    def test_covariance_rule(self):
        rng = np.random.default_rng(2)
        gmap = random_map(rng, 20)
        rot = RotationQuaternion.from_xyzw(Rotation.random(random_state=3).as_quat())
        t = SimilarityTransform(1.7, rot, rng.normal(size=3))
        out = transform_map(gmap, t)
        r = quaternion_to_matrix(rot)
        for i in range(len(gmap)):
            expected = 1.7**2 * r @ covariance(gmap.primitive(i)) @ r.T
            np.testing.assert_allclose(covariance(out.primitive(i)), expected, atol=1e-9)
            np.testing.assert_allclose(out.means[i], 1.7 * r @ gmap.means[i] + t.translation, atol=1e-12)
        np.testing.assert_array_equal(out.opacities, gmap.opacities)
        np.testing.assert_array_equal(out.colors, gmap.colors)

    def test_identity_is_noop(self):
        gmap = random_map(np.random.default_rng(4), 10)
        out = transform_map(gmap, SimilarityTransform.identity())
        np.testing.assert_allclose(out.means, gmap.means, atol=1e-15)
        np.testing.assert_allclose(out.scales, gmap.scales, atol=1e-15)


class TestInitialization:
    def test_backproject_center_pixel(self, small_camera):
        depth = DepthFrame(np.full((4, 4), 2.0))
        points, pixels = backproject(depth, small_camera, Pose(), pixel_stride=1)
        row = np.flatnonzero((pixels[:, 0] == 2) & (pixels[:, 1] == 2))[0]
        np.testing.assert_allclose(points[row], [0.0, 0.0, 2.0])

    def test_principal_ray_primitive(self, small_camera):
        g = init_primitive((2, 2), 2.0, (0.2, 0.4, 0.6), small_camera, Pose(), gamma=3.0, kappa=1.0)
        np.testing.assert_allclose(g.mean, [0.0, 0.0, 2.0])
        np.testing.assert_allclose(g.scale, [0.5, 0.5, 1.5])
        np.testing.assert_allclose(quaternion_to_matrix(g.rotation), np.eye(3), atol=1e-12)
        assert g.opacity == 0.5

    def test_local_z_follows_ray(self, small_camera):
        g = init_primitive((0, 3), 1.5, (0.5, 0.5, 0.5), small_camera, Pose())
        ray = np.array([(0 - 2.0) / 4.0, (3 - 2.0) / 4.0, 1.0])
        np.testing.assert_allclose(quaternion_to_matrix(g.rotation)[:, 2], ray / np.linalg.norm(ray), atol=1e-12)

    def test_ray_alignment_follows_pose(self, small_camera):
        pose = Pose(RotationQuaternion.from_xyzw(Rotation.from_euler("z", 90, degrees=True).as_quat()), np.zeros(3))
        q = ray_aligned_rotation(small_camera, (3, 1), pose)
        ray = np.array([(3 - 2.0) / 4.0, (1 - 2.0) / 4.0, 1.0])
        expected = quaternion_to_matrix(pose.rotation) @ (ray / np.linalg.norm(ray))
        np.testing.assert_allclose(quaternion_to_matrix(q)[:, 2], expected, atol=1e-12)

    def test_pixel_outside_image(self, small_camera):
        with pytest.raises(InvalidInputError):
            ray_aligned_rotation(small_camera, (4, 0), Pose())

    def test_invalid_depth(self, small_camera):
        with pytest.raises(InvalidInputError):
            init_primitive((1, 1), 0.0, (0.5, 0.5, 0.5), small_camera, Pose())

    def test_stride_four_gives_one_primitive(self, small_camera):
        frame = Frame(DepthFrame(np.ones((4, 4))), small_camera, Pose())
        assert len(init_map_from_frames([frame], pixel_stride=4)) == 1

    def test_isotropic_primitive(self, small_camera):
        g = init_primitive(
            (0, 3), 2.0, (0.5, 0.5, 0.5), small_camera, Pose(), gamma=3.0, kappa=1.0, init_mode="isotropic"
        )
        np.testing.assert_allclose(g.scale, [0.5, 0.5, 0.5])
        np.testing.assert_array_equal(g.rotation.as_array(), [1.0, 0.0, 0.0, 0.0])

    def test_init_mode_changes_shape_and_orientation(self, small_camera):
        pose = Pose(RotationQuaternion.from_xyzw(Rotation.from_euler("x", 30, degrees=True).as_quat()), np.zeros(3))
        frame = Frame(DepthFrame(np.full((4, 4), 2.0)), small_camera, pose)
        aligned = init_map_from_frames([frame], pixel_stride=1, gamma=2.0, kappa=1.0)
        iso = init_map_from_frames([frame], pixel_stride=1, gamma=2.0, kappa=1.0, init_mode="isotropic")
        np.testing.assert_array_equal(iso.means, aligned.means)
        np.testing.assert_allclose(aligned.scales[:, 2], 2.0 * aligned.scales[:, 0])
        np.testing.assert_allclose(iso.scales, np.repeat(aligned.scales[:, :1], 3, axis=1))
        np.testing.assert_array_equal(iso.rotations, np.tile([1.0, 0.0, 0.0, 0.0], (16, 1)))
        assert not np.allclose(np.abs(aligned.rotations[:, 0]), 1.0)

    def test_unknown_init_mode(self, small_camera):
        frame = Frame(DepthFrame(np.ones((4, 4))), small_camera, Pose())
        with pytest.raises(InvalidInputError):
            init_map_from_frames([frame], pixel_stride=1, init_mode="spherical")

    def test_invalid_pixels_skipped(self, small_camera):
        depth = np.ones((4, 4))
        depth[0, :] = 0.0
        frame = Frame(DepthFrame(depth), small_camera, Pose())
        assert len(init_map_from_frames([frame], pixel_stride=1)) == 12


class TestAssociation:
    def test_features_are_mean_direction(self, small_camera):
        frame = Frame(DepthFrame(np.ones((4, 4))), small_camera, Pose())
        gmap = init_map_from_frames([frame], pixel_stride=1)
        emb = np.zeros((4, 4, 2), dtype=np.float32)
        emb[..., 0] = 3.0
        associate_semantics(gmap, PixelEmbeddingFrame(emb), frame.depth, small_camera, Pose())
        assert gmap.has_feature.all()
        np.testing.assert_allclose(gmap.features, np.tile([1.0, 0.0], (16, 1)), atol=1e-7)

    def test_far_primitives_untouched(self, small_camera):
        frame = Frame(DepthFrame(np.ones((4, 4))), small_camera, Pose())
        gmap = init_map_from_frames([frame], pixel_stride=1)
        gmap.insert_arrays(
            means=[[5.0, 5.0, 5.0]], scales=[[0.1, 0.1, 0.1]], rotations=[[1.0, 0, 0, 0]],
            opacities=[0.5], colors=[[0.5, 0.5, 0.5]],
        )
        emb = np.ones((4, 4, 3), dtype=np.float32)
        associate_semantics(gmap, PixelEmbeddingFrame(emb), frame.depth, small_camera, Pose())
        assert not gmap.has_feature[-1]
        assert gmap.has_feature[:-1].all()
        np.testing.assert_allclose(np.linalg.norm(gmap.features[:-1], axis=1), 1.0, atol=1e-6)

    def test_many_equidistant_primitives_go_to_lowest_index(self):
        a = 0.03
        ring = np.array(
            [[sx * a, sy * a, 0.0] for sx in (-1, 1) for sy in (-1, 1)]
            + [[sx * a, 0.0, sz * a] for sx in (-1, 1) for sz in (-1, 1)]
            + [[0.0, sy * a, sz * a] for sy in (-1, 1) for sz in (-1, 1)]
        )
        for seed in range(10):
            order = np.random.default_rng(seed).permutation(len(ring))
            gmap = GaussianMap()
            gmap.insert_arrays(
                means=ring[order], scales=np.full((12, 3), 0.01), rotations=np.tile([1.0, 0, 0, 0], (12, 1)),
                opacities=np.full(12, 0.5), colors=np.zeros((12, 3)),
            )
            owners = nearest_primitives(gmap, np.zeros((1, 3)), radius=0.08)
            assert owners[0] == 0

    def test_nearest_matches_bruteforce(self):
        rng = np.random.default_rng(21)
        gmap = random_map(rng, 300, extent=0.5)
        points = rng.uniform(-0.6, 0.6, size=(500, 3))
        owners = nearest_primitives(gmap, points, radius=0.1)
        d = np.linalg.norm(points[:, None, :] - gmap.means[None, :, :], axis=2)
        expected = np.where(d.min(axis=1) < 0.1, d.argmin(axis=1), -1)
        np.testing.assert_array_equal(owners, expected)

    def test_empty_map_rejected(self, small_camera):
        emb = PixelEmbeddingFrame(np.ones((4, 4, 2), dtype=np.float32))
        with pytest.raises(InvalidInputError):
            associate_semantics(GaussianMap(), emb, DepthFrame(np.ones((4, 4))), small_camera, Pose())

    def test_dimension_mismatch(self, small_camera):
        frame = Frame(DepthFrame(np.ones((4, 4))), small_camera, Pose())
        gmap = init_map_from_frames([frame], pixel_stride=1)
        associate_semantics(
            gmap, PixelEmbeddingFrame(np.ones((4, 4, 2), dtype=np.float32)), frame.depth, small_camera, Pose()
        )
        with pytest.raises(InvalidInputError):
            associate_semantics(
                gmap, PixelEmbeddingFrame(np.ones((4, 4, 3), dtype=np.float32)), frame.depth, small_camera, Pose()
            )


class TestMapFiles:
    def test_write_read(self, tmp_path):
        gmap = random_map(np.random.default_rng(5), 7)
        feats = np.zeros((7, 4))
        feats[:, 1] = 1.0
        gmap.ensure_feature_dim(4)
        gmap.accumulate_features(np.arange(5), feats[:5])
        path = tmp_path / "m.map"
        write_map(path, gmap, {"gamma": 3.0, "trajectory": str(tmp_path / "trajectory.txt")})
        back = read_map(path)
        assert sidecar_path(path).exists()
        assert back.metadata["trajectory"] == str(tmp_path / "trajectory.txt")
        assert back.metadata["gamma"] == 3.0
        assert back.metadata["count"] == 7
        np.testing.assert_array_equal(back.means, gmap.means)
        np.testing.assert_allclose(back.rotations, gmap.rotations, atol=1e-15)
        np.testing.assert_array_equal(back.has_feature, gmap.has_feature)
        np.testing.assert_array_equal(back.features[:5], gmap.features[:5])

    def test_bytes_stable(self, tmp_path):
        gmap = random_map(np.random.default_rng(6), 5)
        write_map(tmp_path / "a.map", gmap)
        write_map(tmp_path / "b.map", gmap)
        assert (tmp_path / "a.map").read_bytes() == (tmp_path / "b.map").read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.map"
        path.write_bytes(b"NOTAMAP!" + b"\x00" * 40)
        with pytest.raises(InvalidInputError):
            read_map(path)

    def test_embedding_raster(self, tmp_path):
        emb = PixelEmbeddingFrame(np.random.default_rng(7).normal(size=(3, 5, 4)).astype(np.float32))
        write_embedding_raster(tmp_path / "e.bin", emb)
        np.testing.assert_array_equal(read_embedding_raster(tmp_path / "e.bin").embeddings, emb.embeddings)
