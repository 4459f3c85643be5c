"""Labeled RGB-D frame sets and sparse labeled voxel tables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from src.core.trajectory import Trajectory
from src.errors import InvalidInputError
from src.gsmap.camera import DEFAULT_MAX_RANGE, Frame, check_raster

DEFAULT_DEPTH_FACTOR = 1e-3
DEFAULT_PIXEL_STRIDE = 4
DEFAULT_FRAME_STRIDE = 2


@dataclass
class LabeledFrameSet:
    """Frames with per-pixel labels; all rasters of one frame share its intrinsics' size."""

    frames: list[Frame]
    depth_factor: float = DEFAULT_DEPTH_FACTOR
    max_range: float = DEFAULT_MAX_RANGE
    timestamps: np.ndarray | None = None
    # trajectory file the poses were read from, when loaded from a manifest
    trajectory_path: str | None = None

    def __post_init__(self) -> None:
        if self.max_range <= 0:
            raise InvalidInputError(f"max_range must be positive, got {self.max_range}")
        if self.depth_factor <= 0:
            raise InvalidInputError(f"depth_factor must be positive, got {self.depth_factor}")
        for i, f in enumerate(self.frames):
            check_raster(f.depth.depth.shape, f.intrinsics, f"frame {i} depth")
            if f.labels is not None:
                check_raster(f.labels.shape, f.intrinsics, f"frame {i} labels")
            if f.color is not None:
                check_raster(f.color.shape, f.intrinsics, f"frame {i} color")
            if f.embedding is not None:
                check_raster(f.embedding.embeddings.shape, f.intrinsics, f"frame {i} embeddings")
        if self.timestamps is None:
            self.timestamps = np.arange(len(self.frames), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.frames)

    def trajectory(self) -> Trajectory:
        return Trajectory(np.asarray(self.timestamps, dtype=np.float64), [f.pose for f in self.frames])


@dataclass
class SparseLabeledVoxels:
    """Voxel coordinate -> (label, point_count), rows sorted lexicographically by coordinate."""

    coords: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    point_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.coords.shape[0])

    def as_dict(self) -> dict[tuple[int, int, int], tuple[int, int]]:
        return {
            tuple(c): (int(lab), int(n))
            for c, lab, n in zip(self.coords.tolist(), self.labels.tolist(), self.point_counts.tolist())
        }
