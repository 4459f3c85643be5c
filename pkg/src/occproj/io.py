"""OCCGRID1 occupancy files, text-embedding sets and similarity exports."""
from __future__ import annotations

import csv
import json
import logging
import struct
from pathlib import Path

import numpy as np

from src.errors import InvalidInputError, SchemaError
from src.occproj.grid import GridSpec, OccupancyField, TextEmbeddingSet, unflatten

logger = logging.getLogger(__name__)

GRID_MAGIC = b"OCCGRID1"
GRID_HEADER = struct.Struct("<3dd3IBI")
COUNT = struct.Struct("<Q")


def write_occupancy(path: str | Path, field: OccupancyField) -> None:
    spec = field.spec
    dim = field.feature_dim
    with open(path, "wb") as f:
        f.write(GRID_MAGIC)
        f.write(GRID_HEADER.pack(*spec.origin, spec.voxel_size, *spec.dims, 1 if field.features is not None else 0, dim))
        f.write(field.flat_occupancy().astype("<f4").tobytes())
        f.write(field.flat_label().astype(np.uint8).tobytes())
        if field.features is not None:
            f.write(COUNT.pack(field.feature_index.size))
            rec = np.zeros(field.feature_index.size, dtype=[("index", "<u8"), ("feature", "<f4", (dim,))])
            rec["index"] = field.feature_index
            rec["feature"] = field.features
            f.write(rec.tobytes())
    logger.info("wrote %s grid to %s", "x".join(map(str, spec.dims)), path)


def read_occupancy(path: str | Path) -> OccupancyField:
    path = Path(path)
    data = path.read_bytes()
    head = len(GRID_MAGIC) + GRID_HEADER.size
    if len(data) < head or data[: len(GRID_MAGIC)] != GRID_MAGIC:
        raise InvalidInputError(f"{path}: not an OCCGRID1 file")
    ox, oy, oz, voxel, nx, ny, nz, has_features, dim = GRID_HEADER.unpack_from(data, len(GRID_MAGIC))
    spec = GridSpec((ox, oy, oz), (nx, ny, nz), voxel)
    n = spec.count
    off = head
    if len(data) < off + 5 * n:
        raise InvalidInputError(f"{path}: truncated rasters for {nx}x{ny}x{nz} grid")
    occ = np.frombuffer(data, dtype="<f4", count=n, offset=off).astype(np.float64)
    off += 4 * n
    lab = np.frombuffer(data, dtype=np.uint8, count=n, offset=off).copy()
    off += n
    feature_index = np.zeros(0, dtype=np.int64)
    features = None
    if has_features:
        (count,) = COUNT.unpack_from(data, off)
        off += COUNT.size
        dtype = np.dtype([("index", "<u8"), ("feature", "<f4", (dim,))])
        if len(data) - off != count * dtype.itemsize:
            raise InvalidInputError(f"{path}: feature block does not hold {count} records")
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        feature_index = rec["index"].astype(np.int64)
        features = rec["feature"].astype(np.float32).reshape(count, dim)
    elif len(data) != off:
        raise InvalidInputError(f"{path}: trailing bytes after rasters")
    return OccupancyField(spec, unflatten(spec, occ), unflatten(spec, lab), feature_index, features)


def write_text_embeddings(path: str | Path, texts: TextEmbeddingSet) -> None:
    """JSON manifest next to a raw little-endian f32 (C, D) matrix."""
    path = Path(path)
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(np.ascontiguousarray(texts.embeddings, dtype="<f4").tobytes())
    manifest = {
        "categories": texts.categories,
        "class_ids": texts.class_ids,
        "dim": texts.dim,
        "embeddings": bin_path.name,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_text_embeddings(path: str | Path) -> TextEmbeddingSet:
    """Rows are renormalized after the f32 round trip."""
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    for key in ("categories", "dim", "embeddings"):
        if key not in manifest:
            raise SchemaError(key, f"missing from text embedding manifest {path}")
    categories = list(manifest["categories"])
    dim = int(manifest["dim"])
    raw = (path.parent / manifest["embeddings"]).read_bytes()
    if len(raw) != len(categories) * dim * 4:
        raise InvalidInputError(f"{path}: embedding matrix is not {len(categories)}x{dim} f32")
    matrix = np.frombuffer(raw, dtype="<f4").reshape(len(categories), dim).astype(np.float64)
    return TextEmbeddingSet.normalized(categories, matrix, manifest.get("class_ids"))


def write_similarity_csv(path: str | Path, spec: GridSpec, volume: np.ndarray) -> int:
    """Rows (i, j, k, similarity) for voxels with a score, in linear-index order."""
    flat = np.asarray(volume).reshape(-1, order="F")
    lin = np.flatnonzero(~np.isnan(flat))
    cells = spec.cells_of(lin)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["i", "j", "k", "similarity"])
        for (i, j, k), s in zip(cells.tolist(), flat[lin].tolist()):
            writer.writerow([i, j, k, repr(s)])
    return int(lin.size)


def read_similarity_csv(path: str | Path, spec: GridSpec) -> np.ndarray:
    flat = np.full(spec.count, np.nan)
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            cell = np.array([int(row["i"]), int(row["j"]), int(row["k"])])
            flat[int(spec.linear_index(cell))] = float(row["similarity"])
    return unflatten(spec, flat)
