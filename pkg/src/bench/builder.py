"""Benchmark construction: sparse labeled voxels, dense grid, observability, ground truth."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage

from src.bench.frames import DEFAULT_FRAME_STRIDE, DEFAULT_PIXEL_STRIDE, LabeledFrameSet, SparseLabeledVoxels
from src.core.geometry import quaternion_to_matrix
from src.errors import InvalidInputError
from src.gsmap.camera import Frame, backproject
from src.occproj.grid import DEFAULT_VOXEL_SIZE, LABEL_UNKNOWN, GridSpec, OccupancyField

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE_VOXELS = 1.0
# voxel centers closer to the image plane than this are not projected
MIN_VIEW_DEPTH = 1e-9
# face neighbors in lexicographic order of the neighbor coordinate
_FACE_OFFSETS = ((-1, 0, 0), (0, -1, 0), (0, 0, -1), (0, 0, 1), (0, 1, 0), (1, 0, 0))


def _frame_votes(frame: Frame, pixel_stride: int, voxel_size: float, max_range: float) -> np.ndarray:
    """(M, 4) rows of (i, j, k, label) for sampled pixels with a usable label."""
    if frame.labels is None:
        raise InvalidInputError("frame has no label raster")
    points, pixels = backproject(frame.depth, frame.intrinsics, frame.pose, pixel_stride)
    z = frame.depth.depth[pixels[:, 1], pixels[:, 0]]
    labels = np.asarray(frame.labels)[pixels[:, 1], pixels[:, 0]].astype(np.int64)
    keep = (z <= max_range) & (labels != 0) & (labels != LABEL_UNKNOWN)
    cells = np.floor(points[keep] / voxel_size).astype(np.int64)
    return np.concatenate([cells, labels[keep, None]], axis=1)


def extract_sparse_voxels(
    frames: LabeledFrameSet,
    pixel_stride: int = DEFAULT_PIXEL_STRIDE,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    threads: int = 1,
) -> SparseLabeledVoxels:
    """Majority label per voxel over sampled points; ties go to the lowest label."""
    if len(frames) == 0:
        raise InvalidInputError("frame set is empty")
    if voxel_size <= 0:
        raise InvalidInputError(f"voxel_size must be positive, got {voxel_size}")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(
            pool.map(lambda f: _frame_votes(f, pixel_stride, voxel_size, frames.max_range), frames.frames)
        )
    votes = np.concatenate(parts) if parts else np.zeros((0, 4), dtype=np.int64)
    if votes.shape[0] == 0:
        return SparseLabeledVoxels()
    pairs, counts = np.unique(votes, axis=0, return_counts=True)
    # per cell: highest count first, then lowest label
    order = np.lexsort((pairs[:, 3], -counts, pairs[:, 2], pairs[:, 1], pairs[:, 0]))
    pairs, counts = pairs[order], counts[order]
    first = np.concatenate([[True], np.any(pairs[1:, :3] != pairs[:-1, :3], axis=1)])
    seg = np.cumsum(first) - 1
    totals = np.bincount(seg, weights=counts).astype(np.int64)
    out = SparseLabeledVoxels(pairs[first, :3], pairs[first, 3].astype(np.uint8), totals)
    logger.info("extracted %d labeled voxels from %d votes", len(out), votes.shape[0])
    return out


def densify_grid(sparse: SparseLabeledVoxels, voxel_size: float = DEFAULT_VOXEL_SIZE) -> tuple[GridSpec, np.ndarray]:
    """Dense label raster over the sparse extent.

    A cell takes its own sparse label, else that of a face neighbor (the only
    centers within one voxel), picking the lexicographically smallest neighbor.
    """
    if len(sparse) == 0:
        raise InvalidInputError("cannot densify an empty sparse voxel set")
    lo = sparse.coords.min(axis=0)
    hi = sparse.coords.max(axis=0)
    dims = tuple(int(n) for n in hi - lo + 1)
    spec = GridSpec(tuple(float(c) for c in lo * voxel_size), dims, voxel_size)
    rel = sparse.coords - lo
    padded = np.zeros(tuple(n + 2 for n in dims), dtype=np.uint8)
    present = np.zeros_like(padded, dtype=bool)
    padded[rel[:, 0] + 1, rel[:, 1] + 1, rel[:, 2] + 1] = sparse.labels
    present[rel[:, 0] + 1, rel[:, 1] + 1, rel[:, 2] + 1] = True
    core = (slice(1, -1),) * 3
    dense = padded[core].copy()
    done = present[core].copy()
    nx, ny, nz = dims
    for dx, dy, dz in _FACE_OFFSETS:
        window = (slice(1 + dx, 1 + dx + nx), slice(1 + dy, 1 + dy + ny), slice(1 + dz, 1 + dz + nz))
        take = ~done & present[window]
        dense[take] = padded[window][take]
        done |= take
    return spec, dense


def _frame_observable(spec: GridSpec, centers: np.ndarray, frame: Frame, slack: float) -> np.ndarray:
    K = frame.intrinsics
    r = quaternion_to_matrix(frame.pose.rotation)
    p = (centers - frame.pose.translation) @ r
    z = p[:, 2]
    out = np.zeros(centers.shape[0], dtype=bool)
    front = np.flatnonzero((z > MIN_VIEW_DEPTH) & np.all(np.isfinite(p), axis=1))
    with np.errstate(over="ignore"):
        uf = np.floor(K.fx * p[front, 0] / z[front] + K.cx + 0.5)
        vf = np.floor(K.fy * p[front, 1] / z[front] + K.cy + 0.5)
    inside = np.isfinite(uf) & np.isfinite(vf) & (uf >= 0) & (uf < K.width) & (vf >= 0) & (vf < K.height)
    idx = front[inside]
    measured = frame.depth.depth[vf[inside].astype(np.int64), uf[inside].astype(np.int64)]
    out[idx] = (measured > 0) & (z[idx] <= measured + slack)
    return out


def observability_mask(
    spec: GridSpec,
    frames: LabeledFrameSet,
    frame_stride: int = DEFAULT_FRAME_STRIDE,
    tolerance_voxels: float = DEFAULT_TOLERANCE_VOXELS,
    dilate: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """Union over sampled frames of voxels in front of the camera, in the image and not occluded."""
    if frame_stride < 1:
        raise InvalidInputError(f"frame_stride must be >= 1, got {frame_stride}")
    if tolerance_voxels < 0:
        raise InvalidInputError(f"tolerance_voxels must be non-negative, got {tolerance_voxels}")
    centers = spec.centers(spec.all_cells())
    slack = tolerance_voxels * spec.voxel_size
    selected = frames.frames[::frame_stride]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        masks = list(pool.map(lambda f: _frame_observable(spec, centers, f, slack), selected))
    flat = np.zeros(spec.count, dtype=bool)
    for m in masks:
        flat |= m
    mask = flat.reshape(spec.dims, order="F")
    if dilate:
        mask = ndimage.binary_dilation(mask, structure=ndimage.generate_binary_structure(3, 1))
    logger.info("%d of %d voxels observable from %d frames", int(mask.sum()), spec.count, len(selected))
    return mask


def assemble_benchmark(spec: GridSpec, labels: np.ndarray, mask: np.ndarray) -> OccupancyField:
    """Ground-truth field: 255 outside the mask, dense label inside, occupancy 1 on classes."""
    labels = np.asarray(labels, dtype=np.uint8)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != spec.dims or mask.shape != spec.dims:
        raise InvalidInputError(f"label {labels.shape} and mask {mask.shape} must match grid dims {spec.dims}")
    out = np.where(mask, labels, np.uint8(LABEL_UNKNOWN)).astype(np.uint8)
    occupancy = ((out >= 1) & (out <= 254)).astype(np.float64)
    return OccupancyField(spec, occupancy, out)


def build_benchmark(
    frames: LabeledFrameSet,
    pixel_stride: int = DEFAULT_PIXEL_STRIDE,
    frame_stride: int = DEFAULT_FRAME_STRIDE,
    voxel_size: float = DEFAULT_VOXEL_SIZE,
    tolerance_voxels: float = DEFAULT_TOLERANCE_VOXELS,
    dilate: bool = False,
    threads: int = 1,
) -> OccupancyField:
    sparse = extract_sparse_voxels(frames, pixel_stride, voxel_size, threads)
    spec, dense = densify_grid(sparse, voxel_size)
    mask = observability_mask(spec, frames, frame_stride, tolerance_voxels, dilate, threads)
    return assemble_benchmark(spec, dense, mask)
