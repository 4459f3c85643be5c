"""Language-embedded Gaussian primitive and its covariance / Mahalanobis helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.core.geometry import quaternion_to_matrix
from src.errors import InvalidInputError
from src.models import RotationQuaternion, Vec3, as_vec3

SCALE_FLOOR = 1e-6  # meters
COV_EPS = 1e-12  # added to the covariance diagonal before inverting
NEIGHBOR_CUTOFF = 9.0  # squared Mahalanobis radius of the 3σ support
FEATURE_NORM_TOL = 1e-6


@dataclass(frozen=True)
class GaussianPrimitive:
    """One anisotropic Gaussian: mean, per-axis std devs, rotation, opacity, color, feature."""

    mean: Vec3
    scale: Vec3
    rotation: RotationQuaternion
    opacity: float
    color: np.ndarray
    feature: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", as_vec3(self.mean, "mean"))
        scale = as_vec3(self.scale, "scale")
        if np.any(scale <= 0):
            raise InvalidInputError(f"scale components must be positive, got {scale}")
        object.__setattr__(self, "scale", np.maximum(scale, SCALE_FLOOR))
        if not 0.0 <= self.opacity <= 1.0:
            raise InvalidInputError(f"opacity must be in [0, 1], got {self.opacity}")
        object.__setattr__(self, "opacity", float(self.opacity))
        color = as_vec3(self.color, "color")
        if np.any(color < 0) or np.any(color > 1):
            raise InvalidInputError(f"color must be in [0, 1], got {color}")
        object.__setattr__(self, "color", color)
        if self.feature is not None:
            feat = np.asarray(self.feature, dtype=np.float32).reshape(-1)
            norm = float(np.linalg.norm(feat.astype(np.float64)))
            if abs(norm - 1.0) > FEATURE_NORM_TOL:
                raise InvalidInputError(f"feature must be unit norm, got |f| = {norm}")
            object.__setattr__(self, "feature", feat)


def covariance(g: GaussianPrimitive) -> np.ndarray:
    """Σ = R diag(s²) Rᵀ."""
    r = quaternion_to_matrix(g.rotation)
    cov = (r * (g.scale**2)) @ r.T
    return 0.5 * (cov + cov.T)


def inverse_variances(scales: np.ndarray) -> np.ndarray:
    """Diagonal of the regularized precision in the primitive's local frame."""
    return 1.0 / (np.asarray(scales, dtype=np.float64) ** 2 + COV_EPS)


def local_coords(diff: np.ndarray, rot: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rᵀ·diff per row, written out so every pair is evaluated with the same operation order."""
    dx, dy, dz = diff[:, 0], diff[:, 1], diff[:, 2]
    y0 = rot[:, 0, 0] * dx + rot[:, 1, 0] * dy + rot[:, 2, 0] * dz
    y1 = rot[:, 0, 1] * dx + rot[:, 1, 1] * dy + rot[:, 2, 1] * dz
    y2 = rot[:, 0, 2] * dx + rot[:, 1, 2] * dy + rot[:, 2, 2] * dz
    return y0, y1, y2


def mahalanobis_sq(points: np.ndarray, means: np.ndarray, rot: np.ndarray, inv_var: np.ndarray) -> np.ndarray:
    """Row-wise (x - μ)ᵀ Σ⁻¹ (x - μ) for paired rows."""
    y0, y1, y2 = local_coords(points - means, rot)
    return y0 * y0 * inv_var[:, 0] + y1 * y1 * inv_var[:, 1] + y2 * y2 * inv_var[:, 2]


def support_half_extents(rot: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Half widths of the axis-aligned box around each 3σ ellipsoid."""
    var = np.asarray(scales, dtype=np.float64) ** 2 + COV_EPS
    diag = np.einsum("nij,nj->ni", rot * rot, var)
    return 3.0 * np.sqrt(diag) * (1.0 + 1e-9) + 1e-12


def primitive_arrays(primitives: list[GaussianPrimitive]) -> dict[str, np.ndarray]:
    """Stack a list of primitives into the column arrays a GaussianMap stores."""
    n = len(primitives)
    out = {
        "means": np.zeros((n, 3)),
        "scales": np.ones((n, 3)),
        "rotations": np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        "opacities": np.zeros(n),
        "colors": np.zeros((n, 3)),
    }
    for i, g in enumerate(primitives):
        out["means"][i] = g.mean
        out["scales"][i] = g.scale
        out["rotations"][i] = g.rotation.as_array()
        out["opacities"][i] = g.opacity
        out["colors"][i] = g.color
    dims = {g.feature.shape[0] for g in primitives if g.feature is not None}
    if len(dims) > 1:
        raise InvalidInputError(f"primitives carry features of different dimensions: {sorted(dims)}")
    if dims:
        dim = dims.pop()
        feats = np.zeros((n, dim), dtype=np.float32)
        has = np.zeros(n, dtype=bool)
        for i, g in enumerate(primitives):
            if g.feature is not None:
                feats[i] = g.feature
                has[i] = True
        out["features"] = feats
        out["has_feature"] = has
    return out
