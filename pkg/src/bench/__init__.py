"""Benchmark ground truth from labeled RGB-D frames, plus synthetic box scenes."""
from __future__ import annotations

from src.bench.builder import (
    assemble_benchmark,
    build_benchmark,
    densify_grid,
    extract_sparse_voxels,
    observability_mask,
)
from src.bench.frames import LabeledFrameSet, SparseLabeledVoxels
from src.bench.synth import BoxSpec, CameraPath, SceneSpec, SyntheticScene, generate_scene

__all__ = [
    "BoxSpec",
    "CameraPath",
    "LabeledFrameSet",
    "SceneSpec",
    "SparseLabeledVoxels",
    "SyntheticScene",
    "assemble_benchmark",
    "build_benchmark",
    "densify_grid",
    "extract_sparse_voxels",
    "generate_scene",
    "observability_mask",
]
