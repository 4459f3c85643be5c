"""Attach per-pixel language embeddings to the nearest anchored primitive."""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree

from src.errors import InvalidInputError
from src.gsmap.camera import DepthFrame, PixelEmbeddingFrame, backproject, check_raster
from src.gsmap.gaussian_map import GaussianMap
from src.models import CameraIntrinsics, Pose

logger = logging.getLogger(__name__)

DEFAULT_ASSOCIATION_RADIUS = 0.08
_NEAREST_K = 8


def nearest_primitives(gmap: GaussianMap, points: np.ndarray, radius: float) -> np.ndarray:
    """Nearest primitive mean within radius per point (-1 if none); equal distances go to the lowest index."""
    n = len(gmap)
    if n == 0 or points.shape[0] == 0:
        return np.full(points.shape[0], -1, dtype=np.int64)
    k = min(_NEAREST_K, n)
    tree = cKDTree(gmap.means)
    dist, idx = tree.query(points, k=k, distance_upper_bound=radius)
    dist = dist.reshape(points.shape[0], k)
    idx = idx.reshape(points.shape[0], k)
    best = dist.min(axis=1)
    tied = (dist == best[:, None]) & np.isfinite(dist)
    out = np.where(tied, idx, np.iinfo(np.int64).max).min(axis=1)
    out[~np.isfinite(best)] = -1
    # every returned neighbor ties, so more may lie outside the k returned
    saturated = np.flatnonzero(tied.all(axis=1)) if k < n else np.empty(0, dtype=np.int64)
    for row in saturated:
        cand = np.asarray(tree.query_ball_point(points[row], r=best[row] * (1.0 + 1e-9) + 1e-12), dtype=np.int64)
        d = np.linalg.norm(gmap.means[cand] - points[row], axis=1)
        out[row] = cand[d == d.min()].min()
    return out.astype(np.int64)


def associate_semantics(
    gmap: GaussianMap,
    frame: PixelEmbeddingFrame,
    depth: DepthFrame,
    K: CameraIntrinsics,
    pose: Pose,
    pixel_stride: int = 1,
    association_radius: float = DEFAULT_ASSOCIATION_RADIUS,
) -> GaussianMap:
    """Lift sampled pixel embeddings and fold each into its nearest primitive's running mean."""
    check_raster(frame.embeddings.shape, K, "embedding raster")
    check_raster(depth.depth.shape, K, "depth raster")
    if len(gmap) == 0:
        raise InvalidInputError("cannot associate semantics with an empty map")
    if association_radius <= 0:
        raise InvalidInputError(f"association_radius must be positive, got {association_radius}")
    if gmap.feature_dim not in (0, frame.dim) or (gmap.feature_dim == 0 and gmap.has_feature.any()):
        raise InvalidInputError(
            f"embedding dimension {frame.dim} conflicts with map feature_dim {gmap.feature_dim}"
        )
    gmap.ensure_feature_dim(frame.dim)

    points, pixels = backproject(depth, K, pose, pixel_stride)
    owners = nearest_primitives(gmap, points, association_radius)
    hit = owners >= 0
    emb = frame.embeddings[pixels[hit, 1], pixels[hit, 0]]
    touched = gmap.accumulate_features(owners[hit], emb)
    logger.debug(
        "associated %d/%d pixels onto %d primitives", int(hit.sum()), points.shape[0], touched.size
    )
    return gmap
