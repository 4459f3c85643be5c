"""Synthetic box scenes with analytic depth, labels, features and ground truth."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from src.bench.builder import DEFAULT_TOLERANCE_VOXELS, assemble_benchmark, observability_mask
from src.bench.frames import DEFAULT_DEPTH_FACTOR, LabeledFrameSet
from src.core.geometry import matrix_to_quaternion, quaternion_to_matrix
from src.errors import InvalidInputError, SchemaError
from src.gsmap.camera import DEFAULT_MAX_RANGE, DepthFrame, Frame, PixelEmbeddingFrame, camera_rays, init_map_from_frames
from src.gsmap.gaussian_map import GaussianMap
from src.models import CameraIntrinsics, Pose
from src.occproj.grid import DEFAULT_VOXEL_SIZE, GridSpec, OccupancyField, TextEmbeddingSet

logger = logging.getLogger(__name__)

WALL_COLOR = (0.8, 0.8, 0.8)
_WORLD_UP = np.array([0.0, 0.0, 1.0])


def _quantize_color(c) -> np.ndarray:
    return np.round(np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0) * 255.0) / 255.0


@dataclass
class BoxSpec:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    class_id: int
    color: tuple[float, float, float] = (0.5, 0.5, 0.5)
    feature_id: int | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
            raise SchemaError("boxes", f"box corners must satisfy min < max, got {self.min_corner} {self.max_corner}")
        if not 1 <= int(self.class_id) <= 254:
            raise SchemaError("boxes", f"class_id must lie in [1, 254], got {self.class_id}")
        self.min_corner = tuple(lo.tolist())
        self.max_corner = tuple(hi.tolist())
        self.class_id = int(self.class_id)
        if self.feature_id is None:
            self.feature_id = self.class_id

    @property
    def category(self) -> str:
        return self.name or f"class_{self.class_id}"


@dataclass
class CameraPath:
    """Cameras on a horizontal circle around target, all looking at it."""

    n_frames: int = 24
    radius: float = 1.6
    height: float = 1.2
    target: tuple[float, float, float] | None = None
    arc: float = 2.0 * math.pi
    width: int = 64
    image_height: int = 48
    fx: float = 48.0
    fy: float = 48.0
    dt: float = 0.1

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            self.fx, self.fy, (self.width - 1) / 2.0, (self.image_height - 1) / 2.0, self.width, self.image_height
        )


@dataclass
class SceneSpec:
    room_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    room_max: tuple[float, float, float] = (4.0, 4.0, 2.4)
    boxes: list[BoxSpec] = field(default_factory=list)
    camera: CameraPath = field(default_factory=CameraPath)
    seed: int = 0
    voxel_size: float = DEFAULT_VOXEL_SIZE
    feature_dim: int = 16
    walls: bool = False
    depth_noise: float = 0.0
    depth_factor: float = DEFAULT_DEPTH_FACTOR
    max_range: float = DEFAULT_MAX_RANGE
    frame_stride: int = 1
    tolerance_voxels: float = DEFAULT_TOLERANCE_VOXELS
    observed_only: bool = True
    seed_pixel_stride: int = 4

    def __post_init__(self) -> None:
        lo = np.asarray(self.room_min, dtype=np.float64)
        hi = np.asarray(self.room_max, dtype=np.float64)
        if np.any(lo >= hi):
            raise SchemaError("room_max", "room extent must be positive on every axis")
        for b in self.boxes:
            if np.any(np.asarray(b.min_corner) < lo) or np.any(np.asarray(b.max_corner) > hi):
                raise SchemaError("boxes", f"box {b.category} leaves the room")
        if self.voxel_size <= 0:
            raise SchemaError("voxel_size", f"must be positive, got {self.voxel_size}")
        if self.depth_noise < 0:
            raise SchemaError("depth_noise", f"must be non-negative, got {self.depth_noise}")
        n_features = len({b.feature_id for b in self.boxes})
        if self.feature_dim < max(1, n_features):
            raise SchemaError("feature_dim", f"needs at least {n_features} dimensions for orthonormal features")
        if self.camera.n_frames < 1:
            raise SchemaError("camera.n_frames", "must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> SceneSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(sorted(unknown)[0], "unknown scene field")
        kwargs = dict(data)
        kwargs["boxes"] = [BoxSpec(**b) for b in data.get("boxes", [])]
        camera = data.get("camera", {})
        cam_known = {f.name for f in fields(CameraPath)}
        if set(camera) - cam_known:
            raise SchemaError(f"camera.{sorted(set(camera) - cam_known)[0]}", "unknown camera field")
        kwargs["camera"] = CameraPath(**camera)
        for key in ("room_min", "room_max"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    def grid(self) -> GridSpec:
        lo = np.asarray(self.room_min, dtype=np.float64)
        extent = (np.asarray(self.room_max, dtype=np.float64) - lo) / self.voxel_size
        dims = np.where(np.abs(extent - np.round(extent)) < 1e-9, np.round(extent), np.ceil(extent))
        return GridSpec(tuple(lo.tolist()), tuple(int(n) for n in dims), self.voxel_size)


@dataclass
class SyntheticScene:
    frames: LabeledFrameSet
    ground_truth: OccupancyField
    class_features: dict[int, np.ndarray]
    texts: TextEmbeddingSet
    seed_map: GaussianMap
    voxel_labels: np.ndarray  # exact box voxelization on the ground-truth grid


def look_at_pose(eye: np.ndarray, target: np.ndarray) -> Pose:
    """Camera-to-world pose with +z toward target and image y pointing down."""
    f = target - eye
    f = f / np.linalg.norm(f)
    r = np.cross(f, _WORLD_UP)
    if np.linalg.norm(r) < 1e-9:
        raise InvalidInputError("camera looks straight along the up axis")
    r = r / np.linalg.norm(r)
    d = np.cross(f, r)
    return Pose(matrix_to_quaternion(np.stack([r, d, f], axis=1)), eye)


def camera_poses(spec: SceneSpec) -> list[Pose]:
    cam = spec.camera
    room_lo = np.asarray(spec.room_min)
    room_hi = np.asarray(spec.room_max)
    target = 0.5 * (room_lo + room_hi) if cam.target is None else np.asarray(cam.target, dtype=np.float64)
    poses = []
    for i in range(cam.n_frames):
        theta = cam.arc * i / cam.n_frames
        eye = np.array([target[0] + cam.radius * math.cos(theta), target[1] + cam.radius * math.sin(theta), cam.height])
        if np.any(eye <= room_lo) or np.any(eye >= room_hi):
            raise InvalidInputError(f"camera {i} at {eye.tolist()} is outside the room")
        poses.append(look_at_pose(eye, target))
    return poses


def _slab_hits(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Entry and exit ray parameters of the box [lo, hi] for unit rays."""
    safe = np.where(dirs == 0.0, 1e-300, dirs)
    with np.errstate(over="ignore"):
        t1 = (lo - origin) / safe
        t2 = (hi - origin) / safe
    return np.minimum(t1, t2).max(axis=1), np.maximum(t1, t2).min(axis=1)


def cast_rays(spec: SceneSpec, pose: Pose, K: CameraIntrinsics):
    """Analytic (z-depth, label, color, box index or -1) per pixel, row-major rasters."""
    us, vs = np.meshgrid(np.arange(K.width), np.arange(K.height))
    cam = camera_rays(K, us.reshape(-1), vs.reshape(-1))
    cz = 1.0 / np.linalg.norm(cam, axis=1)
    r = quaternion_to_matrix(pose.rotation)
    dirs = (cam * cz[:, None]) @ r.T
    o = pose.translation
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_box = np.full(n, -1, dtype=np.int64)
    for b, box in enumerate(spec.boxes):
        t_in, t_out = _slab_hits(o, dirs, np.asarray(box.min_corner), np.asarray(box.max_corner))
        hit = (t_in <= t_out) & (t_in > 0) & (t_in < best_t)
        best_t[hit] = t_in[hit]
        best_box[hit] = b
    depth = np.zeros(n)
    labels = np.zeros(n, dtype=np.uint8)
    color = np.zeros((n, 3))
    hit = best_box >= 0
    depth[hit] = best_t[hit] * cz[hit]
    for b, box in enumerate(spec.boxes):
        sel = best_box == b
        labels[sel] = box.class_id
        color[sel] = _quantize_color(box.color)
    if spec.walls:
        _, t_exit = _slab_hits(o, dirs, np.asarray(spec.room_min), np.asarray(spec.room_max))
        wall = ~hit
        depth[wall] = t_exit[wall] * cz[wall]
        color[wall] = _quantize_color(WALL_COLOR)
    shape = (K.height, K.width)
    return depth.reshape(shape), labels.reshape(shape), color.reshape(shape + (3,)), best_box.reshape(shape)


def class_feature_table(spec: SceneSpec, rng: np.random.Generator) -> dict[int, np.ndarray]:
    """Orthonormal float32 features, one per feature id, in ascending id order."""
    ids = sorted({b.feature_id for b in spec.boxes})
    if not ids:
        return {}
    q, _ = np.linalg.qr(rng.standard_normal((spec.feature_dim, len(ids))))
    return {fid: q[:, i].astype(np.float32) for i, fid in enumerate(ids)}


def voxelize_boxes(spec: SceneSpec, grid: GridSpec) -> np.ndarray:
    """Label of the first box containing each voxel center (half-open [min, max)), else 0."""
    centers = grid.centers(grid.all_cells())
    flat = np.zeros(grid.count, dtype=np.uint8)
    for box in spec.boxes:
        inside = np.all((centers >= np.asarray(box.min_corner)) & (centers < np.asarray(box.max_corner)), axis=1)
        flat[inside & (flat == 0)] = box.class_id
    return flat.reshape(grid.dims, order="F")


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Deterministic for a given seed: frames, features, texts, ground truth and a seed map."""
    feature_seq, noise_seq = np.random.SeedSequence(spec.seed).spawn(2)
    features = class_feature_table(spec, np.random.default_rng(feature_seq))
    noise_rng = np.random.default_rng(noise_seq)
    K = spec.camera.intrinsics()
    frames = []
    for pose in camera_poses(spec):
        depth, labels, color, box_idx = cast_rays(spec, pose, K)
        if spec.depth_noise > 0:
            noise = noise_rng.normal(0.0, spec.depth_noise, depth.shape)
            depth = np.where(depth > 0, np.maximum(depth + noise, 0.0), 0.0)
        depth = np.round(depth / spec.depth_factor) * spec.depth_factor
        emb = np.zeros((K.height, K.width, spec.feature_dim), dtype=np.float32)
        for b, box in enumerate(spec.boxes):
            emb[box_idx == b] = features[box.feature_id]
        frames.append(
            Frame(
                depth=DepthFrame(depth, spec.max_range),
                intrinsics=K,
                pose=pose,
                color=color,
                labels=labels,
                embedding=PixelEmbeddingFrame(emb),
            )
        )
    frame_set = LabeledFrameSet(
        frames, spec.depth_factor, spec.max_range, np.arange(len(frames), dtype=np.float64) * spec.camera.dt
    )

    grid = spec.grid()
    voxel_labels = voxelize_boxes(spec, grid)
    if spec.observed_only:
        mask = observability_mask(grid, frame_set, spec.frame_stride, spec.tolerance_voxels)
    else:
        mask = np.ones(grid.dims, dtype=bool)
    gt = assemble_benchmark(grid, voxel_labels, mask)

    by_class: dict[int, BoxSpec] = {}
    for box in spec.boxes:
        by_class.setdefault(box.class_id, box)
    class_ids = sorted(by_class)
    class_features = {c: features[by_class[c].feature_id] for c in class_ids}
    if class_ids:
        texts = TextEmbeddingSet.normalized(
            [by_class[c].category for c in class_ids],
            np.stack([class_features[c].astype(np.float64) for c in class_ids]),
            class_ids,
        )
    else:
        texts = TextEmbeddingSet([], np.zeros((0, spec.feature_dim)), [])
    seed_map = init_map_from_frames(frames, spec.seed_pixel_stride)
    logger.info(
        "synthetic scene: %d frames, %d boxes, %d occupied ground-truth voxels",
        len(frames),
        len(spec.boxes),
        int(gt.occupancy.sum()),
    )
    return SyntheticScene(frame_set, gt, class_features, texts, seed_map, voxel_labels)
