"""Gaussian map -> voxel occupancy, features and open-vocabulary labels.

Voxels are evaluated at their centers. Work is split into fixed-thickness slabs
along x; every voxel's result depends only on its own (voxel, primitive) pairs
in ascending primitive order, so the indexed and brute-force projectors agree
exactly and thread count never changes the output.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from src.errors import InvalidInputError
from src.gsmap.gaussian_map import GaussianMap
from src.gsmap.index import expand_boxes
from src.gsmap.primitives import NEIGHBOR_CUTOFF, mahalanobis_sq
from src.occproj.grid import (
    DEFAULT_TAU_OCC,
    FEATURE_EPS,
    GridSpec,
    OccupancyField,
    TextEmbeddingSet,
    log_mixture_terms,
    unflatten,
)

logger = logging.getLogger(__name__)

SLAB_VOXELS = 8
BRUTEFORCE_CHUNK = 2048


@dataclass
class _SlabResult:
    voxels: np.ndarray  # linear indices with at least one neighbor
    occupancy: np.ndarray
    labels: np.ndarray
    feature_index: np.ndarray
    features: np.ndarray
    degenerate: int


@dataclass
class _MapArrays:
    means: np.ndarray
    rot: np.ndarray
    inv_var: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    features: np.ndarray
    has_feature: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def of(cls, gmap: GaussianMap) -> _MapArrays:
        lo, hi = gmap.support_boxes()
        return cls(
            means=gmap.means,
            rot=gmap.rotation_matrices(),
            inv_var=gmap.inverse_variances(),
            scales=gmap.scales,
            opacities=gmap.opacities,
            features=gmap.features.astype(np.float64),
            has_feature=gmap.has_feature,
            lo=lo,
            hi=hi,
        )


def _pair_distances(arr: _MapArrays, spec: GridSpec, cells: np.ndarray, prim: np.ndarray):
    """Keep pairs inside the 3σ support, ordered by (voxel, primitive)."""
    d = mahalanobis_sq(spec.centers(cells), arr.means[prim], arr.rot[prim], arr.inv_var[prim])
    keep = d <= NEIGHBOR_CUTOFF
    vox = spec.linear_index(cells[keep])
    prim, d = prim[keep], d[keep]
    order = np.lexsort((prim, vox))
    return vox[order], prim[order], d[order]


def _segments(vox: np.ndarray):
    first = np.concatenate([[True], vox[1:] != vox[:-1]])
    starts = np.flatnonzero(first)
    seg = np.cumsum(first) - 1
    return starts, seg


def _evaluate(
    arr: _MapArrays,
    vox: np.ndarray,
    prim: np.ndarray,
    dist: np.ndarray,
    tau_occ: float,
    texts: TextEmbeddingSet | None,
    with_features: bool,
) -> _SlabResult:
    dim = arr.features.shape[1]
    if vox.size == 0:
        e = np.zeros(0, dtype=np.int64)
        return _SlabResult(e, np.zeros(0), np.zeros(0, dtype=np.uint8), e, np.zeros((0, dim)), 0)
    starts, seg = _segments(vox)
    voxels = vox[starts]
    rank = np.arange(vox.size) - starts[seg]

    support = np.exp(-0.5 * dist)
    q = np.ones(starts.size)
    for r in range(int(rank.max()) + 1):
        at = rank == r
        q[seg[at]] *= 1.0 - support[at]
    occupancy = 1.0 - q
    labels = np.zeros(starts.size, dtype=np.uint8)
    if not with_features:
        e = np.zeros(0, dtype=np.int64)
        return _SlabResult(voxels, occupancy, labels, e, np.zeros((0, dim)), 0)

    occupied = occupancy >= tau_occ
    use = occupied[seg] & arr.has_feature[prim]
    logits = np.where(use, log_mixture_terms(dist, arr.scales[prim], arr.opacities[prim]), -np.inf)
    top = np.maximum.reduceat(logits, starts)
    ok = np.isfinite(top)
    w = np.where(use, np.exp(logits - np.where(ok, top, 0.0)[seg]), 0.0)
    denom = np.add.reduceat(w, starts)
    summed = np.add.reduceat(w[:, None] * arr.features[prim], starts, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = summed / denom[:, None]
    norm = np.linalg.norm(np.where(ok[:, None], f, 0.0), axis=1)
    good = occupied & ok & (norm >= FEATURE_EPS)
    degenerate = int(np.sum(occupied & ~good))
    feats = f[good] / norm[good, None]
    if texts is not None and feats.shape[0]:
        sims = feats @ texts.embeddings.T
        labels[good] = np.asarray(texts.class_ids, dtype=np.uint8)[np.argmax(sims, axis=1)]
    return _SlabResult(voxels, occupancy, labels, voxels[good], feats, degenerate)


def _slab(arr: _MapArrays, gmap: GaussianMap, spec: GridSpec, i0: int, i1: int, **kw) -> _SlabResult:
    origin, v = spec.origin_array, spec.voxel_size
    _, ny, nz = spec.dims
    ids = gmap.index.candidates_in_box(origin + np.array([i0, 0, 0]) * v, origin + np.array([i1, ny, nz]) * v)
    if ids.size == 0:
        return _evaluate(arr, np.zeros(0, dtype=np.int64), ids, np.zeros(0), **kw)
    lo = np.floor((arr.lo[ids] - origin) / v - 0.5).astype(np.int64)
    hi = np.ceil((arr.hi[ids] - origin) / v - 0.5).astype(np.int64)
    lo = np.maximum(lo, [i0, 0, 0])
    hi = np.minimum(hi, [i1 - 1, ny - 1, nz - 1])
    owner, cells = expand_boxes(lo, hi)
    vox, prim, dist = _pair_distances(arr, spec, cells, ids[owner])
    return _evaluate(arr, vox, prim, dist, **kw)


def _check_inputs(gmap: GaussianMap, tau_occ: float, texts: TextEmbeddingSet | None) -> bool:
    if not 0.0 <= tau_occ <= 1.0:
        raise InvalidInputError(f"tau_occ must lie in [0, 1], got {tau_occ}")
    with_features = gmap.feature_dim > 0 and bool(gmap.has_feature.any())
    if texts is not None:
        if not with_features:
            raise InvalidInputError("text queries need a map with features; run associate first")
        if texts.dim != gmap.feature_dim:
            raise InvalidInputError(
                f"text dimension {texts.dim} does not match map feature_dim {gmap.feature_dim}"
            )
    return with_features


def _assemble(spec: GridSpec, parts: list[_SlabResult], dim: int, with_features: bool) -> OccupancyField:
    occ = np.zeros(spec.count)
    lab = np.zeros(spec.count, dtype=np.uint8)
    for p in parts:
        occ[p.voxels] = p.occupancy
        lab[p.voxels] = p.labels
    degenerate = sum(p.degenerate for p in parts)
    if degenerate:
        logger.warning("%d occupied voxels had no usable feature and stay unlabeled", degenerate)
    feature_index = np.concatenate([p.feature_index for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    features = None
    if with_features:
        features = np.concatenate([p.features for p in parts]) if parts else np.zeros((0, dim))
        order = np.argsort(feature_index, kind="stable")
        feature_index, features = feature_index[order], features[order]
    return OccupancyField(
        spec,
        unflatten(spec, occ),
        unflatten(spec, lab),
        feature_index.astype(np.int64),
        features.astype(np.float32) if features is not None else None,
    )


def project(
    gmap: GaussianMap,
    spec: GridSpec,
    tau_occ: float = DEFAULT_TAU_OCC,
    texts: TextEmbeddingSet | None = None,
    threads: int = 1,
) -> OccupancyField:
    """Occupancy by probabilistic exclusion; features and labels on voxels with occupancy ≥ tau_occ."""
    with_features = _check_inputs(gmap, tau_occ, texts)
    if len(gmap) == 0:
        return OccupancyField.empty(spec)
    arr = _MapArrays.of(gmap)
    kw = {"tau_occ": tau_occ, "texts": texts, "with_features": with_features}
    nx = spec.dims[0]
    bounds = [(i, min(i + SLAB_VOXELS, nx)) for i in range(0, nx, SLAB_VOXELS)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda b: _slab(arr, gmap, spec, b[0], b[1], **kw), bounds))
    out = _assemble(spec, parts, gmap.feature_dim, with_features)
    logger.info(
        "projected %d primitives onto %s grid: %d voxels >= tau_occ, %d labeled",
        len(gmap),
        "x".join(map(str, spec.dims)),
        int(np.sum(out.occupancy >= tau_occ)),
        int(np.count_nonzero(out.label)),
    )
    return out


def project_bruteforce(
    gmap: GaussianMap,
    spec: GridSpec,
    tau_occ: float = DEFAULT_TAU_OCC,
    texts: TextEmbeddingSet | None = None,
) -> OccupancyField:
    """Reference projector: every voxel against every primitive, no spatial index."""
    with_features = _check_inputs(gmap, tau_occ, texts)
    if len(gmap) == 0:
        return OccupancyField.empty(spec)
    arr = _MapArrays.of(gmap)
    n = len(gmap)
    parts = []
    for start in range(0, spec.count, BRUTEFORCE_CHUNK):
        lin = np.arange(start, min(start + BRUTEFORCE_CHUNK, spec.count))
        cells = np.repeat(spec.cells_of(lin), n, axis=0)
        prim = np.tile(np.arange(n), lin.size)
        vox, prim, dist = _pair_distances(arr, spec, cells, prim)
        parts.append(_evaluate(arr, vox, prim, dist, tau_occ, texts, with_features))
    return _assemble(spec, parts, gmap.feature_dim, with_features)


def similarity_volume(field: OccupancyField, texts: TextEmbeddingSet, category: str) -> np.ndarray:
    """Per-voxel score against one category; NaN where the voxel carries no feature."""
    c = texts.index_of(category)
    if field.features is None:
        raise InvalidInputError("occupancy field has no voxel features to query")
    if field.feature_dim != texts.dim:
        raise InvalidInputError(f"field feature_dim {field.feature_dim} does not match text dimension {texts.dim}")
    flat = np.full(field.spec.count, np.nan)
    flat[field.feature_index] = field.features.astype(np.float64) @ texts.embeddings[c]
    return unflatten(field.spec, flat)
