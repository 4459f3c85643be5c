"""Rotations, rigid and similarity transforms, and closed-form point-set alignment."""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial.transform import Rotation

from src.errors import (
    DegenerateConfigurationError,
    InsufficientCorrespondencesError,
    InvalidInputError,
)
from src.models import UNIT_TOLERANCE, Pose, RotationQuaternion, SimilarityTransform, Vec3, as_vec3

logger = logging.getLogger(__name__)


def quat_to_matrix_batch(quats: np.ndarray) -> np.ndarray:
    """(N, 4) wxyz quaternions -> (N, 3, 3) matrices. Inputs are normalized first."""
    q = np.asarray(quats, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def quaternion_to_matrix(q: RotationQuaternion) -> np.ndarray:
    """Rotation matrix of a unit quaternion; rejects quaternions off the unit sphere."""
    norm = q.norm()
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise InvalidInputError(f"quaternion is not unit norm (|q| = {norm!r})")
    return quat_to_matrix_batch(q.as_array()[None, :])[0]


def matrix_to_quaternion(matrix: np.ndarray) -> RotationQuaternion:
    return RotationQuaternion.from_xyzw(Rotation.from_matrix(np.asarray(matrix, dtype=np.float64)).as_quat())


def matrices_to_quats_batch(matrices: np.ndarray) -> np.ndarray:
    """(N, 3, 3) -> (N, 4) wxyz."""
    xyzw = Rotation.from_matrix(np.asarray(matrices, dtype=np.float64)).as_quat()
    xyzw = np.atleast_2d(xyzw)
    return np.concatenate([xyzw[:, 3:4], xyzw[:, 0:3]], axis=1)


def compose_rotation(a: RotationQuaternion, b: RotationQuaternion) -> RotationQuaternion:
    """a * b, renormalized."""
    r = Rotation.from_quat(a.as_xyzw()) * Rotation.from_quat(b.as_xyzw())
    return RotationQuaternion.from_xyzw(r.as_quat())


def compose_pose(a: Pose, b: Pose) -> Pose:
    """Matrix-product semantics: (a ∘ b)(p) = a(b(p))."""
    ra = quaternion_to_matrix(a.rotation)
    return Pose(compose_rotation(a.rotation, b.rotation), ra @ b.translation + a.translation)


def invert_pose(a: Pose) -> Pose:
    rt = quaternion_to_matrix(a.rotation).T
    inv_rot = RotationQuaternion(a.rotation.w, -a.rotation.x, -a.rotation.y, -a.rotation.z)
    return Pose(inv_rot, -(rt @ a.translation))


def apply_pose(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Apply to (3,) or (N, 3) points."""
    r = quaternion_to_matrix(pose.rotation)
    pts = np.asarray(points, dtype=np.float64)
    return pts @ r.T + pose.translation


def apply_similarity(transform: SimilarityTransform, p: Vec3) -> Vec3:
    """x' = s R x + t."""
    r = quaternion_to_matrix(transform.rotation)
    return transform.scale * (r @ as_vec3(p, "point")) + transform.translation


def apply_similarity_batch(transform: SimilarityTransform, points: np.ndarray) -> np.ndarray:
    r = quaternion_to_matrix(transform.rotation)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return transform.scale * (pts @ r.T) + transform.translation


def transform_pose(transform: SimilarityTransform, pose: Pose) -> Pose:
    """Move a camera pose into the transformed frame (center mapped, orientation rotated)."""
    center = apply_similarity(transform, pose.translation)
    return Pose(compose_rotation(transform.rotation, pose.rotation), center)


def umeyama_align(src, dst, estimate_scale: bool = True) -> SimilarityTransform:
    """Least-squares s, R, t minimizing sum ||dst_i - (s R src_i + t)||^2.

    SVD of the cross-covariance with a sign-correction diagonal so that R never
    reflects. With estimate_scale False the scale is exactly 1.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InsufficientCorrespondencesError(
            f"point sets differ in size: {src.shape[0]} vs {dst.shape[0]}"
        )
    num = src.shape[0]
    if num < 3:
        raise InsufficientCorrespondencesError(f"need at least 3 correspondences, got {num}")

    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    src_demean = src - src_mean
    dst_demean = dst - dst_mean

    cov = dst_demean.T @ src_demean / num
    u, sing, vt = np.linalg.svd(cov)
    tol = max(sing[0], 1e-300) * 1e-12
    rank = int(np.sum(sing > tol))
    if rank < 2:
        raise DegenerateConfigurationError(
            f"cross-covariance has rank {rank}; point sets are collinear or coincident"
        )

    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    rot = u @ np.diag(d) @ vt

    if estimate_scale:
        src_var = src_demean.var(axis=0).sum()
        if src_var <= 0:
            raise DegenerateConfigurationError("source points have zero variance")
        scale = float(sing @ d / src_var)
    else:
        scale = 1.0

    translation = dst_mean - scale * rot @ src_mean
    logger.debug("umeyama: n=%d scale=%.12g rank=%d", num, scale, rank)
    return SimilarityTransform(scale, matrix_to_quaternion(rot), translation)


def alignment_residual(transform: SimilarityTransform, src, dst) -> float:
    """Sum of squared distances after applying the transform."""
    moved = apply_similarity_batch(transform, src)
    diff = moved - np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    return float(np.sum(diff * diff))
