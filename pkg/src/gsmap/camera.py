"""Depth/embedding rasters, back-projection, and ray-aligned or isotropic primitive initialization."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from src.core.geometry import apply_pose
from src.errors import InvalidInputError
from src.gsmap.gaussian_map import GaussianMap
from src.gsmap.primitives import SCALE_FLOOR, GaussianPrimitive
from src.models import CameraIntrinsics, Pose, RotationQuaternion

logger = logging.getLogger(__name__)

DEFAULT_MAX_RANGE = 10.0
DEFAULT_GAMMA = 1.25
DEFAULT_KAPPA = 0.5
DEFAULT_O_INIT = 0.5
INIT_RAY_ALIGNED = "ray_aligned"
INIT_ISOTROPIC = "isotropic"
INIT_MODES = (INIT_RAY_ALIGNED, INIT_ISOTROPIC)


@dataclass
class DepthFrame:
    """Metric depth raster (H, W); 0 marks invalid. Values beyond max_range are truncated to 0."""

    depth: np.ndarray
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self) -> None:
        d = np.array(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise InvalidInputError(f"depth raster must be 2-D, got shape {d.shape}")
        if self.max_range <= 0:
            raise InvalidInputError(f"max_range must be positive, got {self.max_range}")
        d[~np.isfinite(d) | (d < 0) | (d > self.max_range)] = 0.0
        self.depth = d

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0


@dataclass
class PixelEmbeddingFrame:
    """Dense per-pixel embeddings, shape (H, W, D)."""

    embeddings: np.ndarray

    def __post_init__(self) -> None:
        e = np.asarray(self.embeddings, dtype=np.float32)
        if e.ndim != 3:
            raise InvalidInputError(f"embedding raster must be (H, W, D), got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise InvalidInputError("embedding raster contains non-finite values")
        self.embeddings = e

    @property
    def height(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def width(self) -> int:
        return int(self.embeddings.shape[1])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[2])


@dataclass
class Frame:
    """One synchronized observation: depth + pose + intrinsics, optional color/labels/embeddings."""

    depth: DepthFrame
    intrinsics: CameraIntrinsics
    pose: Pose
    color: np.ndarray | None = None
    labels: np.ndarray | None = None
    embedding: PixelEmbeddingFrame | None = None
    meta: dict = field(default_factory=dict)


def check_raster(shape: tuple[int, ...], K: CameraIntrinsics, what: str) -> None:
    if shape[0] != K.height or shape[1] != K.width:
        raise InvalidInputError(
            f"{what} is {shape[1]}x{shape[0]} but intrinsics expect {K.width}x{K.height}"
        )


def camera_rays(K: CameraIntrinsics, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Camera-frame rays with unit z: ((u - cx)/fx, (v - cy)/fy, 1)."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    return np.stack([(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(us)], axis=-1)


def sample_pixels(K: CameraIntrinsics, pixel_stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (v, u) grid every pixel_stride pixels, starting at (0, 0)."""
    if pixel_stride < 1:
        raise InvalidInputError(f"pixel_stride must be >= 1, got {pixel_stride}")
    vv, uu = np.meshgrid(
        np.arange(0, K.height, pixel_stride), np.arange(0, K.width, pixel_stride), indexing="ij"
    )
    return uu.reshape(-1), vv.reshape(-1)


def backproject(
    depth: DepthFrame, K: CameraIntrinsics, pose: Pose, pixel_stride: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """World points pose ∘ (z K⁻¹ [u, v, 1]) of sampled valid pixels.

    Returns (points (M, 3), pixels (M, 2) as (u, v)) in row-major pixel order.
    """
    check_raster(depth.depth.shape, K, "depth raster")
    us, vs = sample_pixels(K, pixel_stride)
    z = depth.depth[vs, us]
    keep = z > 0
    us, vs, z = us[keep], vs[keep], z[keep]
    cam = camera_rays(K, us, vs) * z[:, None]
    return apply_pose(pose, cam), np.stack([us, vs], axis=1)


def ray_aligned_rotations(K: CameraIntrinsics, us: np.ndarray, vs: np.ndarray, pose: Pose) -> np.ndarray:
    """(M, 4) wxyz rotations whose local +Z follows the world ray through each pixel.

    Camera-frame part is the minimal rotation taking +Z to the ray; camera rays
    always have positive z so the antipodal case never occurs.
    """
    d = camera_rays(K, us, vs)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    sin = np.hypot(d[:, 0], d[:, 1])
    angle = np.arctan2(sin, d[:, 2])
    axis = np.zeros_like(d)
    nz = sin > 0
    axis[nz, 0] = -d[nz, 1] / sin[nz]
    axis[nz, 1] = d[nz, 0] / sin[nz]
    rot = Rotation.from_quat(pose.rotation.as_xyzw()) * Rotation.from_rotvec(axis * angle[:, None])
    xyzw = np.atleast_2d(rot.as_quat())
    return np.concatenate([xyzw[:, 3:4], xyzw[:, 0:3]], axis=1)


def ray_aligned_rotation(K: CameraIntrinsics, pixel, pose: Pose) -> RotationQuaternion:
    u, v = float(pixel[0]), float(pixel[1])
    if not (0 <= u < K.width and 0 <= v < K.height):
        raise InvalidInputError(f"pixel ({u}, {v}) outside {K.width}x{K.height} image")
    return RotationQuaternion.from_array(ray_aligned_rotations(K, np.array([u]), np.array([v]), pose)[0])


def footprint_scales(
    depths: np.ndarray, K: CameraIntrinsics, gamma: float, kappa: float, init_mode: str = INIT_RAY_ALIGNED
) -> np.ndarray:
    """(s⊥, s⊥, γ s⊥) with s⊥ = κ z / min(fx, fy), the one-pixel footprint at depth z.

    Isotropic initialization drops the elongation and returns (s⊥, s⊥, s⊥).
    """
    check_init_mode(init_mode)
    if gamma <= 0 or kappa <= 0:
        raise InvalidInputError(f"gamma and kappa must be positive, got gamma={gamma} kappa={kappa}")
    s_perp = kappa * np.asarray(depths, dtype=np.float64) / min(K.fx, K.fy)
    along = s_perp if init_mode == INIT_ISOTROPIC else gamma * s_perp
    scales = np.stack([s_perp, s_perp, along], axis=-1)
    return np.maximum(scales, SCALE_FLOOR)


def check_init_mode(init_mode: str) -> None:
    if init_mode not in INIT_MODES:
        raise InvalidInputError(f"init_mode must be one of {', '.join(INIT_MODES)}, got {init_mode!r}")


def init_rotations(K: CameraIntrinsics, us: np.ndarray, vs: np.ndarray, pose: Pose, init_mode: str) -> np.ndarray:
    check_init_mode(init_mode)
    if init_mode == INIT_ISOTROPIC:
        return np.tile([1.0, 0.0, 0.0, 0.0], (np.asarray(us).shape[0], 1))
    return ray_aligned_rotations(K, us, vs, pose)


def init_primitive(
    pixel,
    depth_value: float,
    color,
    K: CameraIntrinsics,
    pose: Pose,
    gamma: float = DEFAULT_GAMMA,
    kappa: float = DEFAULT_KAPPA,
    o_init: float = DEFAULT_O_INIT,
    init_mode: str = INIT_RAY_ALIGNED,
) -> GaussianPrimitive:
    """Primitive anchored at the back-projected pixel, elongated along its viewing ray unless isotropic."""
    if not depth_value > 0:
        raise InvalidInputError(f"depth must be positive, got {depth_value}")
    u, v = float(pixel[0]), float(pixel[1])
    mean = apply_pose(pose, camera_rays(K, np.array([u]), np.array([v]))[0] * depth_value)
    if init_mode == INIT_ISOTROPIC:
        rotation = RotationQuaternion.identity()
    else:
        rotation = ray_aligned_rotation(K, (u, v), pose)
    return GaussianPrimitive(
        mean=mean,
        scale=footprint_scales(np.array([depth_value]), K, gamma, kappa, init_mode)[0],
        rotation=rotation,
        opacity=o_init,
        color=np.asarray(color, dtype=np.float64),
    )


def init_frame_primitives(
    gmap: GaussianMap,
    frame: Frame,
    pixel_stride: int,
    gamma: float = DEFAULT_GAMMA,
    kappa: float = DEFAULT_KAPPA,
    o_init: float = DEFAULT_O_INIT,
    init_mode: str = INIT_RAY_ALIGNED,
) -> int:
    """Vectorized init_primitive over a frame's sampled valid pixels; returns the count added."""
    K = frame.intrinsics
    points, pixels = backproject(frame.depth, K, frame.pose, pixel_stride)
    if points.shape[0] == 0:
        return 0
    us, vs = pixels[:, 0], pixels[:, 1]
    z = frame.depth.depth[vs, us]
    if frame.color is not None:
        check_raster(frame.color.shape, K, "color image")
        colors = np.clip(np.asarray(frame.color, dtype=np.float64)[vs, us], 0.0, 1.0)
    else:
        colors = np.full((points.shape[0], 3), 0.5)
    gmap.insert_arrays(
        means=points,
        scales=footprint_scales(z, K, gamma, kappa, init_mode),
        rotations=init_rotations(K, us, vs, frame.pose, init_mode),
        opacities=np.full(points.shape[0], o_init),
        colors=colors,
    )
    return int(points.shape[0])


def init_map_from_frames(
    frames: list[Frame],
    pixel_stride: int,
    gamma: float = DEFAULT_GAMMA,
    kappa: float = DEFAULT_KAPPA,
    o_init: float = DEFAULT_O_INIT,
    init_mode: str = INIT_RAY_ALIGNED,
) -> GaussianMap:
    check_init_mode(init_mode)
    gmap = GaussianMap()
    for i, frame in enumerate(frames):
        added = init_frame_primitives(gmap, frame, pixel_stride, gamma, kappa, o_init, init_mode)
        logger.debug("frame %d: %d primitives", i, added)
    logger.info("initialized %d primitives from %d frames (%s)", len(gmap), len(frames), init_mode)
    return gmap
