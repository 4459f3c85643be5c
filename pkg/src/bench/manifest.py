"""Dataset manifests: JSON index of per-frame rasters, intrinsics and trajectory."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from src.bench.frames import DEFAULT_DEPTH_FACTOR, LabeledFrameSet
from src.core.trajectory import read_trajectory, write_trajectory
from src.errors import SchemaError
from src.gsmap.camera import DEFAULT_MAX_RANGE, Frame
from src.gsmap.io import (
    read_color_png,
    read_depth_png,
    read_embedding_raster,
    read_label_png,
    write_color_png,
    write_depth_png,
    write_embedding_raster,
    write_label_png,
)
from src.models import CameraIntrinsics

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TRAJECTORY_NAME = "trajectory.txt"


def _require(data: dict, key: str, where: str = "manifest") -> Any:
    if key not in data:
        raise SchemaError(key, f"missing from {where}")
    return data[key]


def write_dataset(root: str | Path, frames: LabeledFrameSet, include_embeddings: bool = True) -> Path:
    """Write rasters under root/{depth,label,color,embedding}/ and the manifest; returns its path."""
    root = Path(root)
    for sub in ("depth", "label", "color", "embedding"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for i, frame in enumerate(frames.frames):
        name = f"{i:06d}"
        entry = {"depth": f"depth/{name}.png"}
        write_depth_png(root / entry["depth"], frame.depth.depth, frames.depth_factor)
        if frame.labels is not None:
            entry["label"] = f"label/{name}.png"
            write_label_png(root / entry["label"], frame.labels)
        if frame.color is not None:
            entry["color"] = f"color/{name}.png"
            write_color_png(root / entry["color"], frame.color)
        if include_embeddings and frame.embedding is not None:
            entry["embedding"] = f"embedding/{name}.bin"
            write_embedding_raster(root / entry["embedding"], frame.embedding)
        if i and frame.intrinsics != frames.frames[0].intrinsics:
            entry["intrinsics"] = frame.intrinsics.to_dict()
        entries.append(entry)
    write_trajectory(root / TRAJECTORY_NAME, frames.trajectory())
    manifest = {
        "depth_factor": frames.depth_factor,
        "max_range": frames.max_range,
        "intrinsics": frames.frames[0].intrinsics.to_dict() if frames.frames else None,
        "trajectory": TRAJECTORY_NAME,
        "frames": entries,
    }
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d frames to %s", len(entries), root)
    return path


def read_dataset(path: str | Path, require_embeddings: bool = False) -> LabeledFrameSet:
    """Load every frame listed by the manifest; file errors surface as OSError naming the path."""
    path = Path(path)
    root = path.parent
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(manifest, dict):
        raise SchemaError("manifest", "top level must be an object")
    entries = _require(manifest, "frames")
    if not isinstance(entries, list) or not entries:
        raise SchemaError("frames", "manifest lists no frames")
    depth_factor = float(manifest.get("depth_factor", DEFAULT_DEPTH_FACTOR))
    max_range = float(manifest.get("max_range", DEFAULT_MAX_RANGE))
    default_k = manifest.get("intrinsics")
    trajectory_file = (root / _require(manifest, "trajectory")).resolve()
    trajectory = read_trajectory(trajectory_file)
    if len(trajectory) != len(entries):
        raise SchemaError("trajectory", f"has {len(trajectory)} poses for {len(entries)} frames")

    frames = []
    for i, entry in enumerate(entries):
        where = f"frames[{i}]"
        k_data = entry.get("intrinsics", default_k)
        if k_data is None:
            raise SchemaError(f"{where}.intrinsics", "missing and no manifest default")
        try:
            K = CameraIntrinsics.from_mapping(k_data)
        except KeyError as exc:
            raise SchemaError(f"{where}.intrinsics.{exc.args[0]}", "missing") from None
        depth = read_depth_png(root / _require(entry, "depth", where), depth_factor, max_range)
        labels = read_label_png(root / entry["label"]) if "label" in entry else None
        color = read_color_png(root / entry["color"]) if "color" in entry else None
        if "embedding" in entry:
            embedding = read_embedding_raster(root / entry["embedding"])
        elif require_embeddings:
            raise SchemaError(f"{where}.embedding", "embedding raster required")
        else:
            embedding = None
        frames.append(
            Frame(depth=depth, intrinsics=K, pose=trajectory.poses[i], color=color, labels=labels, embedding=embedding)
        )
    return LabeledFrameSet(frames, depth_factor, max_range, trajectory.timestamps, str(trajectory_file))
