"""Binary Gaussian map files (LEGSMAP1 + JSON sidecar) and raster readers/writers."""
from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import imageio.v2 as imageio
import numpy as np

from src.errors import InvalidInputError
from src.gsmap.camera import DepthFrame, PixelEmbeddingFrame
from src.gsmap.gaussian_map import GaussianMap

logger = logging.getLogger(__name__)

MAP_MAGIC = b"LEGSMAP1" + b"\x00" * 8
MAP_HEADER = struct.Struct("<QI")
RASTER_HEADER = struct.Struct("<III")
DEFAULT_DEPTH_FACTOR = 1e-3


def _record_dtype(feature_dim: int) -> np.dtype:
    fields = [
        ("mean", "<f8", (3,)),
        ("scale", "<f8", (3,)),
        ("rotation", "<f8", (4,)),
        ("opacity", "<f8"),
        ("color", "<f8", (3,)),
    ]
    if feature_dim:
        fields.append(("feature", "<f4", (feature_dim,)))
    return np.dtype(fields)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_map(path: str | Path, gmap: GaussianMap, metadata: dict | None = None) -> None:
    """Write the binary map and its provenance sidecar (sorted keys, stable bytes)."""
    path = Path(path)
    dim = gmap.feature_dim
    rec = np.zeros(len(gmap), dtype=_record_dtype(dim))
    rec["mean"] = gmap.means
    rec["scale"] = gmap.scales
    rec["rotation"] = gmap.rotations
    rec["opacity"] = gmap.opacities
    rec["color"] = gmap.colors
    if dim:
        feats = gmap.features.copy()
        feats[~gmap.has_feature] = 0
        rec["feature"] = feats
    with open(path, "wb") as f:
        f.write(MAP_MAGIC)
        f.write(MAP_HEADER.pack(len(gmap), dim))
        f.write(rec.tobytes())
    meta = dict(gmap.metadata)
    meta.update(metadata or {})
    meta.update({"count": len(gmap), "feature_dim": dim})
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d primitives to %s", len(gmap), path)


def read_map(path: str | Path) -> GaussianMap:
    path = Path(path)
    data = path.read_bytes()
    head = len(MAP_MAGIC) + MAP_HEADER.size
    if len(data) < head or data[: len(MAP_MAGIC)] != MAP_MAGIC:
        raise InvalidInputError(f"{path}: not a LEGSMAP1 file")
    count, dim = MAP_HEADER.unpack_from(data, len(MAP_MAGIC))
    dtype = _record_dtype(dim)
    if len(data) - head != count * dtype.itemsize:
        raise InvalidInputError(f"{path}: expected {count} records of {dtype.itemsize} bytes")
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=head)
    gmap = GaussianMap(dim)
    gmap.insert_arrays(
        means=rec["mean"].astype(np.float64),
        scales=rec["scale"].astype(np.float64),
        rotations=rec["rotation"].astype(np.float64),
        opacities=rec["opacity"].astype(np.float64),
        colors=rec["color"].astype(np.float64),
        features=rec["feature"].astype(np.float32) if dim else None,
    )
    side = sidecar_path(path)
    if side.exists():
        gmap.metadata = json.loads(side.read_text(encoding="utf-8"))
    return gmap


def write_embedding_raster(path: str | Path, frame: PixelEmbeddingFrame) -> None:
    h, w, d = frame.embeddings.shape
    with open(path, "wb") as f:
        f.write(RASTER_HEADER.pack(w, h, d))
        f.write(np.ascontiguousarray(frame.embeddings, dtype="<f4").tobytes())


def read_embedding_raster(path: str | Path) -> PixelEmbeddingFrame:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < RASTER_HEADER.size:
        raise InvalidInputError(f"{path}: truncated embedding raster")
    w, h, d = RASTER_HEADER.unpack_from(data, 0)
    if len(data) - RASTER_HEADER.size != w * h * d * 4:
        raise InvalidInputError(f"{path}: raster size does not match header {w}x{h}x{d}")
    arr = np.frombuffer(data, dtype="<f4", offset=RASTER_HEADER.size).reshape(h, w, d)
    return PixelEmbeddingFrame(arr.astype(np.float32))


def write_depth_png(path: str | Path, depth: np.ndarray, depth_factor: float = DEFAULT_DEPTH_FACTOR) -> None:
    """16-bit PNG of round(depth / depth_factor)."""
    units = np.round(np.asarray(depth, dtype=np.float64) / depth_factor)
    if units.max(initial=0) > np.iinfo(np.uint16).max:
        raise InvalidInputError(f"depth exceeds 16-bit range at factor {depth_factor}")
    imageio.imwrite(path, units.astype(np.uint16))


def read_depth_png(path: str | Path, depth_factor: float = DEFAULT_DEPTH_FACTOR, max_range: float = 10.0) -> DepthFrame:
    raw = np.asarray(imageio.imread(path))
    if raw.ndim != 2:
        raise InvalidInputError(f"{path}: depth PNG must be single channel, got shape {raw.shape}")
    return DepthFrame(raw.astype(np.float64) * depth_factor, max_range)


def write_label_png(path: str | Path, labels: np.ndarray) -> None:
    imageio.imwrite(path, np.asarray(labels, dtype=np.uint8))


def read_label_png(path: str | Path) -> np.ndarray:
    raw = np.asarray(imageio.imread(path))
    if raw.ndim != 2:
        raise InvalidInputError(f"{path}: label PNG must be single channel, got shape {raw.shape}")
    return raw.astype(np.uint8)


def write_color_png(path: str | Path, color: np.ndarray) -> None:
    """RGB in [0, 1] stored as 8-bit."""
    imageio.imwrite(path, np.round(np.clip(color, 0.0, 1.0) * 255.0).astype(np.uint8))


def read_color_png(path: str | Path) -> np.ndarray:
    raw = np.asarray(imageio.imread(path))
    if raw.ndim != 3 or raw.shape[2] < 3:
        raise InvalidInputError(f"{path}: color PNG must be RGB, got shape {raw.shape}")
    return raw[:, :, :3].astype(np.float64) / 255.0
