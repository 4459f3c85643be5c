"""GaussianMap: column storage of primitives plus the spatial hash over their supports."""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial.transform import Rotation

from src.core.geometry import quat_to_matrix_batch, quaternion_to_matrix
from src.errors import InvalidInputError
from src.gsmap.index import SpatialHashIndex
from src.gsmap.primitives import (
    NEIGHBOR_CUTOFF,
    SCALE_FLOOR,
    GaussianPrimitive,
    inverse_variances,
    mahalanobis_sq,
    primitive_arrays,
    support_half_extents,
)
from src.models import RotationQuaternion, SimilarityTransform, as_vec3

logger = logging.getLogger(__name__)

FEATURE_EPS = 1e-9


class GaussianMap:
    """Ordered primitives (insertion order) with one row per primitive in each array.

    Mutation (insert, associate, optimize) happens in serialized phases; between
    phases any number of readers may query the map.
    """

    def __init__(self, feature_dim: int = 0) -> None:
        if feature_dim < 0:
            raise InvalidInputError(f"feature_dim must be non-negative, got {feature_dim}")
        self.feature_dim = int(feature_dim)
        self.means = np.zeros((0, 3))
        self.scales = np.zeros((0, 3))
        self.rotations = np.zeros((0, 4))
        self.opacities = np.zeros(0)
        self.colors = np.zeros((0, 3))
        self.features = np.zeros((0, self.feature_dim), dtype=np.float32)
        self.has_feature = np.zeros(0, dtype=bool)
        # running sums behind the stored features
        self.feature_sum = np.zeros((0, self.feature_dim))
        self.feature_count = np.zeros(0, dtype=np.int64)
        self.metadata: dict = {}
        self.index = SpatialHashIndex()
        self._rot_cache: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.means.shape[0])

    # ---- accessors -------------------------------------------------------

    def primitive(self, i: int) -> GaussianPrimitive:
        feat = self.features[i].copy() if self.has_feature[i] else None
        return GaussianPrimitive(
            mean=self.means[i].copy(),
            scale=self.scales[i].copy(),
            rotation=RotationQuaternion.from_array(self.rotations[i]),
            opacity=float(self.opacities[i]),
            color=self.colors[i].copy(),
            feature=feat,
        )

    def rotation_matrices(self) -> np.ndarray:
        if self._rot_cache is None or self._rot_cache.shape[0] != len(self):
            self._rot_cache = quat_to_matrix_batch(self.rotations) if len(self) else np.zeros((0, 3, 3))
        return self._rot_cache

    def inverse_variances(self) -> np.ndarray:
        return inverse_variances(self.scales)

    def support_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        half = support_half_extents(self.rotation_matrices(), self.scales)
        return self.means - half, self.means + half

    def copy(self, with_index: bool = True) -> GaussianMap:
        """Deep copy; without the index the spatial queries stay empty until rebuild_index."""
        out = GaussianMap(self.feature_dim)
        out._set_columns(self)
        out.metadata = dict(self.metadata)
        if with_index:
            out.rebuild_index()
        return out

    def _set_columns(self, other: GaussianMap) -> None:
        self.means = other.means.copy()
        self.scales = other.scales.copy()
        self.rotations = other.rotations.copy()
        self.opacities = other.opacities.copy()
        self.colors = other.colors.copy()
        self.features = other.features.copy()
        self.has_feature = other.has_feature.copy()
        self.feature_sum = other.feature_sum.copy()
        self.feature_count = other.feature_count.copy()
        self._rot_cache = None

    # ---- mutation --------------------------------------------------------

    def invalidate(self) -> None:
        """Call after editing scales or rotations in place."""
        self._rot_cache = None

    def rebuild_index(self) -> None:
        self._rot_cache = None
        self.index = SpatialHashIndex()
        if len(self):
            lo, hi = self.support_boxes()
            self.index.add(0, lo, hi)

    def ensure_feature_dim(self, dim: int) -> None:
        if dim == self.feature_dim:
            return
        if self.feature_dim == 0 and not self.has_feature.any():
            self.feature_dim = dim
            self.features = np.zeros((len(self), dim), dtype=np.float32)
            self.feature_sum = np.zeros((len(self), dim))
            return
        raise InvalidInputError(f"feature dimension {dim} conflicts with map feature_dim {self.feature_dim}")

    def insert_arrays(
        self,
        means: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        colors: np.ndarray,
        features: np.ndarray | None = None,
        has_feature: np.ndarray | None = None,
    ) -> GaussianMap:
        """Append a batch given as column arrays; the index is extended in the same phase."""
        means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
        n = means.shape[0]
        if n == 0:
            return self
        scales = np.maximum(np.asarray(scales, dtype=np.float64).reshape(n, 3), SCALE_FLOOR)
        rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        rotations = rotations / np.linalg.norm(rotations, axis=1, keepdims=True)
        opacities = np.asarray(opacities, dtype=np.float64).reshape(n)
        colors = np.asarray(colors, dtype=np.float64).reshape(n, 3)
        if np.any((opacities < 0) | (opacities > 1)):
            raise InvalidInputError("opacities must lie in [0, 1]")
        if features is not None:
            features = np.asarray(features, dtype=np.float32).reshape(n, -1)
            self.ensure_feature_dim(features.shape[1])
            if has_feature is None:
                has_feature = np.linalg.norm(features.astype(np.float64), axis=1) > FEATURE_EPS
        else:
            features = np.zeros((n, self.feature_dim), dtype=np.float32)
            has_feature = np.zeros(n, dtype=bool)
        has_feature = np.asarray(has_feature, dtype=bool).reshape(n)

        first = len(self)
        self.means = np.concatenate([self.means, means])
        self.scales = np.concatenate([self.scales, scales])
        self.rotations = np.concatenate([self.rotations, rotations])
        self.opacities = np.concatenate([self.opacities, opacities])
        self.colors = np.concatenate([self.colors, colors])
        self.features = np.concatenate([self.features, features])
        self.has_feature = np.concatenate([self.has_feature, has_feature])
        self.feature_sum = np.concatenate([self.feature_sum, features.astype(np.float64)])
        self.feature_count = np.concatenate([self.feature_count, has_feature.astype(np.int64)])
        self._rot_cache = None

        half = support_half_extents(quat_to_matrix_batch(rotations), scales)
        self.index.add(first, means - half, means + half)
        return self

    def clear_semantics(self) -> None:
        """Drop features and their accumulators (rerunning association starts from scratch)."""
        self.features[:] = 0
        self.has_feature[:] = False
        self.feature_sum[:] = 0
        self.feature_count[:] = 0

    def accumulate_features(self, ids: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
        """Add embeddings to running sums and refresh the touched features; returns touched ids."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return ids
        np.add.at(self.feature_sum, ids, np.asarray(embeddings, dtype=np.float64))
        self.feature_count += np.bincount(ids, minlength=len(self))
        touched = np.unique(ids)
        mean = self.feature_sum[touched] / self.feature_count[touched, None]
        norm = np.linalg.norm(mean, axis=1)
        ok = norm >= FEATURE_EPS
        feats = np.zeros((touched.size, self.feature_dim), dtype=np.float32)
        feats[ok] = (mean[ok] / norm[ok, None]).astype(np.float32)
        self.features[touched] = feats
        self.has_feature[touched] = ok
        if np.any(~ok):
            logger.debug("%d primitives ended with a cancelled feature", int(np.sum(~ok)))
        return touched

    # ---- queries ---------------------------------------------------------

    def neighbor_pairs(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(point row, primitive id, squared Mahalanobis) within the 3σ support, sorted by (row, id)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        q, ids = self.index.candidates_at(pts)
        if q.size == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        d = mahalanobis_sq(pts[q], self.means[ids], self.rotation_matrices()[ids], self.inverse_variances()[ids])
        keep = d <= NEIGHBOR_CUTOFF
        q, ids, d = q[keep], ids[keep], d[keep]
        order = np.lexsort((ids, q))
        return q[order], ids[order], d[order]


def insert_batch(gmap: GaussianMap, primitives: list[GaussianPrimitive]) -> GaussianMap:
    """Append primitives in order and extend the index."""
    if not primitives:
        return gmap
    cols = primitive_arrays(primitives)
    return gmap.insert_arrays(
        cols["means"],
        cols["scales"],
        cols["rotations"],
        cols["opacities"],
        cols["colors"],
        cols.get("features"),
        cols.get("has_feature"),
    )


def query_neighbors(gmap: GaussianMap, x) -> list[int]:
    """Indices of primitives whose 3σ ellipsoid contains x, ascending."""
    _, ids, _ = gmap.neighbor_pairs(as_vec3(x, "query point")[None, :])
    return ids.tolist()


def query_neighbors_bruteforce(gmap: GaussianMap, x) -> list[int]:
    """Same membership rule scanning every primitive."""
    if len(gmap) == 0:
        return []
    p = np.broadcast_to(as_vec3(x, "query point"), gmap.means.shape)
    d = mahalanobis_sq(p, gmap.means, gmap.rotation_matrices(), gmap.inverse_variances())
    return np.flatnonzero(d <= NEIGHBOR_CUTOFF).tolist()


def transform_map(gmap: GaussianMap, transform: SimilarityTransform) -> GaussianMap:
    """x' = sRx + t, σ' = sσ, R_g' = R R_g; appearance and features untouched."""
    out = GaussianMap(gmap.feature_dim)
    out._set_columns(gmap)
    out.metadata = dict(gmap.metadata)
    if len(gmap):
        r = quaternion_to_matrix(transform.rotation)
        out.means = transform.scale * (gmap.means @ r.T) + transform.translation
        out.scales = np.maximum(transform.scale * gmap.scales, SCALE_FLOOR)
        rot = Rotation.from_quat(transform.rotation.as_xyzw()) * Rotation.from_quat(
            gmap.rotations[:, [1, 2, 3, 0]]
        )
        xyzw = np.atleast_2d(rot.as_quat())
        out.rotations = np.concatenate([xyzw[:, 3:4], xyzw[:, 0:3]], axis=1)
    out.rebuild_index()
    return out
