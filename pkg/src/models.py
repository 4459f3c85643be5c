"""Core value types: vectors, quaternions, poses, similarity transforms, intrinsics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from src.errors import InvalidInputError

# 3-vectors are plain float64 arrays of shape (3,)
Vec3 = np.ndarray

UNIT_TOLERANCE = 1e-9


def as_vec3(value, name: str = "vector") -> Vec3:
    """Coerce to a finite float64 array of shape (3,)."""
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise InvalidInputError(f"{name} must have 3 components, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class RotationQuaternion:
    """Unit quaternion, scalar first (w, x, y, z)."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_array(cls, wxyz, normalize: bool = True) -> RotationQuaternion:
        q = np.asarray(wxyz, dtype=np.float64).reshape(4)
        if normalize:
            n = np.linalg.norm(q)
            if not np.isfinite(n) or n == 0.0:
                raise InvalidInputError("quaternion has zero or non-finite norm")
            q = q / n
        return cls(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    @classmethod
    def from_xyzw(cls, xyzw) -> RotationQuaternion:
        """scipy and TUM files store the scalar last."""
        q = np.asarray(xyzw, dtype=np.float64).reshape(4)
        return cls.from_array([q[3], q[0], q[1], q[2]])

    @classmethod
    def identity(cls) -> RotationQuaternion:
        return cls()

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=np.float64)

    def as_xyzw(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.w], dtype=np.float64)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform (element of SE(3))."""

    rotation: RotationQuaternion = field(default_factory=RotationQuaternion)
    translation: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        object.__setattr__(self, "translation", as_vec3(self.translation, "translation"))

    @classmethod
    def identity(cls) -> Pose:
        return cls()


@dataclass(frozen=True)
class SimilarityTransform:
    """x' = scale * R x + t."""

    scale: float = 1.0
    rotation: RotationQuaternion = field(default_factory=RotationQuaternion)
    translation: Vec3 = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidInputError(f"similarity scale must be positive, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "translation", as_vec3(self.translation, "translation"))

    @classmethod
    def identity(cls) -> SimilarityTransform:
        return cls()

    @classmethod
    def from_pose(cls, pose: Pose) -> SimilarityTransform:
        return cls(1.0, pose.rotation, pose.translation)

    def as_pose(self) -> Pose:
        return Pose(self.rotation, self.translation)

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "rotation_wxyz": self.rotation.as_array().tolist(),
            "translation": self.translation.tolist(),
        }


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; pixel (u, v) looks along ((u - cx)/fx, (v - cy)/fy, 1)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise InvalidInputError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]], dtype=np.float64
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_mapping(cls, data: dict) -> CameraIntrinsics:
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
