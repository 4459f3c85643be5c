"""Voxel grids, occupancy fields, text embeddings and the per-voxel projection math."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.core.geometry import quaternion_to_matrix
from src.errors import DegenerateFeatureError, DegenerateMixtureError, InvalidInputError
from src.gsmap.primitives import COV_EPS, GaussianPrimitive, inverse_variances, mahalanobis_sq
from src.models import as_vec3

logger = logging.getLogger(__name__)

DEFAULT_VOXEL_SIZE = 0.08
DEFAULT_TAU_OCC = 0.5
LABEL_FREE = 0
LABEL_UNKNOWN = 255
FEATURE_EPS = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned voxel grid; voxel (i, j, k) is centered at origin + (i+½, j+½, k+½)·voxel_size."""

    origin: tuple[float, float, float]
    dims: tuple[int, int, int]
    voxel_size: float = DEFAULT_VOXEL_SIZE

    def __post_init__(self) -> None:
        origin = tuple(float(c) for c in as_vec3(self.origin, "grid origin"))
        dims = tuple(int(n) for n in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise InvalidInputError(f"grid dims must be three positive integers, got {self.dims}")
        if not self.voxel_size > 0:
            raise InvalidInputError(f"voxel_size must be positive, got {self.voxel_size}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def origin_array(self) -> np.ndarray:
        return np.array(self.origin, dtype=np.float64)

    @property
    def count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def centers(self, cells: np.ndarray) -> np.ndarray:
        """World centers of integer cells (M, 3)."""
        return self.origin_array + (np.asarray(cells, dtype=np.float64) + 0.5) * self.voxel_size

    def linear_index(self, cells: np.ndarray) -> np.ndarray:
        """x-fastest linear index i + Nx (j + Ny k)."""
        c = np.asarray(cells, dtype=np.int64)
        nx, ny, _ = self.dims
        return c[..., 0] + nx * (c[..., 1] + ny * c[..., 2])

    def cells_of(self, linear: np.ndarray) -> np.ndarray:
        idx = np.asarray(linear, dtype=np.int64)
        nx, ny, _ = self.dims
        return np.stack([idx % nx, (idx // nx) % ny, idx // (nx * ny)], axis=-1)

    def all_cells(self) -> np.ndarray:
        """Every cell in linear-index order."""
        return self.cells_of(np.arange(self.count))

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "dims": list(self.dims), "voxel_size": self.voxel_size}

    @classmethod
    def from_mapping(cls, data: dict) -> GridSpec:
        return cls(tuple(data["origin"]), tuple(data["dims"]), float(data.get("voxel_size", DEFAULT_VOXEL_SIZE)))


@dataclass
class OccupancyField:
    """Occupancy α and labels on a grid, rasters shaped (Nx, Ny, Nz).

    Features are sparse: ``feature_index`` holds ascending linear indices of
    occupied voxels and ``features`` their unit vectors.
    """

    spec: GridSpec
    occupancy: np.ndarray
    label: np.ndarray
    feature_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    features: np.ndarray | None = None

    def __post_init__(self) -> None:
        shape = self.spec.dims
        self.occupancy = np.asarray(self.occupancy, dtype=np.float64)
        self.label = np.asarray(self.label, dtype=np.uint8)
        if self.occupancy.shape != shape or self.label.shape != shape:
            raise InvalidInputError(
                f"rasters {self.occupancy.shape}/{self.label.shape} do not match grid dims {shape}"
            )
        self.feature_index = np.asarray(self.feature_index, dtype=np.int64)
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float32)
            if self.features.shape[0] != self.feature_index.size:
                raise InvalidInputError("feature rows do not match feature_index")

    @classmethod
    def empty(cls, spec: GridSpec) -> OccupancyField:
        return cls(spec, np.zeros(spec.dims), np.zeros(spec.dims, dtype=np.uint8))

    @property
    def feature_dim(self) -> int:
        return 0 if self.features is None else int(self.features.shape[1])

    def flat_occupancy(self) -> np.ndarray:
        return self.occupancy.reshape(-1, order="F")

    def flat_label(self) -> np.ndarray:
        return self.label.reshape(-1, order="F")

    def feature_at(self, cell) -> np.ndarray | None:
        if self.features is None:
            return None
        lin = int(self.spec.linear_index(np.asarray(cell)))
        pos = np.searchsorted(self.feature_index, lin)
        if pos < self.feature_index.size and self.feature_index[pos] == lin:
            return self.features[pos]
        return None


def unflatten(spec: GridSpec, values: np.ndarray) -> np.ndarray:
    return np.asarray(values).reshape(spec.dims, order="F")


@dataclass
class TextEmbeddingSet:
    """Ordered category names with unit-norm text embeddings (C, D)."""

    categories: list[str]
    embeddings: np.ndarray
    class_ids: list[int] | None = None

    def __post_init__(self) -> None:
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != len(self.categories):
            raise InvalidInputError(
                f"expected {len(self.categories)} embedding rows, got array of shape {emb.shape}"
            )
        if len(set(self.categories)) != len(self.categories):
            raise InvalidInputError("category names must be unique")
        norms = np.linalg.norm(emb, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("text embeddings must be unit norm")
        self.embeddings = emb
        if self.class_ids is None:
            self.class_ids = list(range(1, len(self.categories) + 1))
        if len(self.class_ids) != len(self.categories):
            raise InvalidInputError("class_ids must align with categories")
        if any(not 1 <= c <= 254 for c in self.class_ids):
            raise InvalidInputError(f"class ids must lie in [1, 254], got {self.class_ids}")

    @classmethod
    def normalized(cls, categories: list[str], matrix: np.ndarray, class_ids: list[int] | None = None) -> TextEmbeddingSet:
        m = np.asarray(matrix, dtype=np.float64)
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        if np.any(norms < FEATURE_EPS):
            raise InvalidInputError("text embedding with zero norm")
        return cls(list(categories), m / norms, class_ids)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def index_of(self, name: str) -> int:
        try:
            return self.categories.index(name)
        except ValueError:
            raise InvalidInputError(
                f"unknown category {name!r}; available: {', '.join(self.categories)}"
            ) from None


# ---- per-voxel math ---------------------------------------------------------


def _primitive_terms(neighbors: list[GaussianPrimitive]):
    means = np.stack([g.mean for g in neighbors])
    rot = np.stack([quaternion_to_matrix(g.rotation) for g in neighbors])
    scales = np.stack([g.scale for g in neighbors])
    return means, rot, scales


def spatial_support(g: GaussianPrimitive, x) -> float:
    """exp(-½ (x - μ)ᵀ Σ⁻¹ (x - μ)) with the regularized precision."""
    means, rot, scales = _primitive_terms([g])
    d = mahalanobis_sq(as_vec3(x, "query point")[None], means, rot, inverse_variances(scales))
    return float(np.exp(-0.5 * d[0]))


def compose_occupancy(alphas) -> float:
    """1 - Π (1 - α_k), multiplied in list order."""
    q = 1.0
    for a in alphas:
        a = float(a)
        if not 0.0 <= a <= 1.0:
            raise InvalidInputError(f"support values must lie in [0, 1], got {a}")
        q *= 1.0 - a
    return 1.0 - q


def log_mixture_terms(dist_sq: np.ndarray, scales: np.ndarray, opacities: np.ndarray) -> np.ndarray:
    """log(o_k) + log N(x; μ_k, Σ_k) with the full normalization constant."""
    logdet = np.sum(np.log(np.asarray(scales, dtype=np.float64) ** 2 + COV_EPS), axis=-1)
    with np.errstate(divide="ignore"):
        log_o = np.log(np.asarray(opacities, dtype=np.float64))
    return log_o - 0.5 * (dist_sq + logdet + 3.0 * _LOG_2PI)


def responsibilities(neighbors: list[GaussianPrimitive], x) -> np.ndarray:
    """Posterior p(G_k | x) of a local mixture weighted by opacity; sums to 1."""
    if not neighbors:
        raise InvalidInputError("responsibilities need at least one neighbor")
    means, rot, scales = _primitive_terms(neighbors)
    pts = np.broadcast_to(as_vec3(x, "query point"), means.shape)
    d = mahalanobis_sq(pts, means, rot, inverse_variances(scales))
    logits = log_mixture_terms(d, scales, np.array([g.opacity for g in neighbors]))
    top = np.max(logits)
    if not np.isfinite(top):
        raise DegenerateMixtureError("every mixture weight is zero")
    w = np.exp(logits - top)
    return w / np.sum(w)


def expected_feature(neighbors: list[GaussianPrimitive], x) -> np.ndarray:
    """Responsibility-weighted feature average, L2-normalized."""
    resp = responsibilities(neighbors, x)
    if any(r > 0 and g.feature is None for r, g in zip(resp, neighbors)):
        raise InvalidInputError("a contributing neighbor has no feature")
    dims = {g.feature.shape[0] for g in neighbors if g.feature is not None}
    if len(dims) != 1:
        raise InvalidInputError(f"neighbor features have inconsistent dimensions {sorted(dims)}")
    feats = np.stack(
        [g.feature.astype(np.float64) if g.feature is not None else np.zeros(next(iter(dims))) for g in neighbors]
    )
    f = resp @ feats
    norm = float(np.linalg.norm(f))
    if norm < FEATURE_EPS:
        raise DegenerateFeatureError(f"aggregated feature norm {norm:.3g} is too small")
    return f / norm


def text_similarity(voxel_feature: np.ndarray, texts: TextEmbeddingSet) -> np.ndarray:
    """Cosine score of one unit voxel feature against every category."""
    f = np.asarray(voxel_feature, dtype=np.float64).reshape(-1)
    if f.shape[0] != texts.dim:
        raise InvalidInputError(f"feature dimension {f.shape[0]} does not match text dimension {texts.dim}")
    return texts.embeddings @ f
