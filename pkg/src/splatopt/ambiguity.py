"""Two maps that render the same pixel yet occupy different voxels.

Map A holds one primitive at depth d with opacity w. Map B splits it into two
primitives at d ± δ whose compositing weights are both w/2, which matches the
first two moments (Σw, Σw z) seen by the central ray.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.gsmap.gaussian_map import GaussianMap, insert_batch
from src.gsmap.primitives import GaussianPrimitive
from src.models import CameraIntrinsics, Pose, RotationQuaternion
from src.occproj.grid import GridSpec

WITNESS_DEPTH = 1.0
WITNESS_SPLIT = 0.16
WITNESS_SIGMA = 0.04
WITNESS_OPACITY = 0.8
WITNESS_COLOR = (0.6, 0.3, 0.2)


@dataclass
class AmbiguityWitness:
    map_a: GaussianMap
    map_b: GaussianMap
    intrinsics: CameraIntrinsics
    pose: Pose
    grid: GridSpec

    @property
    def central_pixel(self) -> tuple[int, int]:
        return int(self.intrinsics.cx), int(self.intrinsics.cy)

    @property
    def ray(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(3), np.array([0.0, 0.0, 1.0])


def _primitive(depth: float, opacity: float) -> GaussianPrimitive:
    return GaussianPrimitive(
        mean=np.array([0.0, 0.0, depth]),
        scale=np.full(3, WITNESS_SIGMA),
        rotation=RotationQuaternion.identity(),
        opacity=opacity,
        color=np.array(WITNESS_COLOR),
    )


def ambiguity_witness() -> AmbiguityWitness:
    d, delta, w = WITNESS_DEPTH, WITNESS_SPLIT, WITNESS_OPACITY
    map_a = insert_batch(GaussianMap(), [_primitive(d, w)])
    # w1 = a1 = w/2, w2 = a2 (1 - a1) = w/2
    a1 = 0.5 * w
    a2 = 0.5 * w / (1.0 - a1)
    map_b = insert_batch(GaussianMap(), [_primitive(d - delta, a1), _primitive(d + delta, a2)])
    K = CameraIntrinsics(fx=50.0, fy=50.0, cx=2.0, cy=2.0, width=5, height=5)
    voxel = 0.08
    grid = GridSpec(origin=(-2.5 * voxel, -2.5 * voxel, d - 5.5 * voxel), dims=(5, 5, 10), voxel_size=voxel)
    return AmbiguityWitness(map_a, map_b, K, Pose.identity(), grid)
