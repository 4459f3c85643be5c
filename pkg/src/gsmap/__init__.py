"""Language-embedded Gaussian map: storage, spatial index, initialization, semantics."""
from __future__ import annotations

from src.gsmap.camera import (
    DepthFrame,
    Frame,
    PixelEmbeddingFrame,
    backproject,
    init_map_from_frames,
    init_primitive,
    ray_aligned_rotation,
)
from src.gsmap.gaussian_map import GaussianMap, insert_batch, query_neighbors, transform_map
from src.gsmap.primitives import GaussianPrimitive, covariance
from src.gsmap.semantics import associate_semantics

__all__ = [
    "DepthFrame",
    "Frame",
    "GaussianMap",
    "GaussianPrimitive",
    "PixelEmbeddingFrame",
    "associate_semantics",
    "backproject",
    "covariance",
    "init_map_from_frames",
    "init_primitive",
    "insert_batch",
    "query_neighbors",
    "ray_aligned_rotation",
    "transform_map",
]
