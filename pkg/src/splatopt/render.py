"""Ray-wise alpha compositing of Gaussians with a minimum-Mahalanobis kernel.

Each primitive contributes once per ray, at the ray parameter t* that minimizes
its quadratic form; a_k = o_k exp(-d_min / 2), w_k = a_k prod_{j<k} (1 - a_j).
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from src.core.geometry import quaternion_to_matrix
from src.errors import InvalidInputError
from src.gsmap.camera import camera_rays
from src.gsmap.gaussian_map import GaussianMap
from src.gsmap.index import expand_boxes
from src.gsmap.primitives import NEIGHBOR_CUTOFF, GaussianPrimitive, inverse_variances
from src.models import CameraIntrinsics, Pose, as_vec3

logger = logging.getLogger(__name__)

_SORT_TOL = 1e-12


@dataclass
class RenderedFrame:
    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W), camera z
    weight: np.ndarray  # (H, W), sum of compositing weights


@dataclass
class RayPairs:
    """Every (pixel, primitive) contribution of one frame, sorted by (pixel, t*, primitive)."""

    pixel: np.ndarray
    prim: np.ndarray
    t: np.ndarray
    dmin: np.ndarray
    gauss: np.ndarray  # exp(-d_min / 2)
    alpha: np.ndarray
    transmittance: np.ndarray  # prod_{j<k} (1 - a_j) in front of each pair
    weight: np.ndarray
    rank_groups: list[np.ndarray]  # pair rows of each depth rank, front to back
    # ray/primitive quantities kept for the backward pass
    dirs: np.ndarray  # world ray per pair
    offset: np.ndarray  # μ - origin per pair
    d_loc: np.ndarray
    m_loc: np.ndarray
    inv_var: np.ndarray
    quad_a: np.ndarray
    quad_b: np.ndarray
    clamped: np.ndarray


def ray_quadratic(offset, dirs, rot, inv_var):
    """Local-frame terms of q(t) = (t d - m)ᵀ P (t d - m)."""
    d_loc = np.einsum("nji,nj->ni", rot, dirs)
    m_loc = np.einsum("nji,nj->ni", rot, offset)
    qa = np.sum(inv_var * d_loc * d_loc, axis=1)
    qb = np.sum(inv_var * d_loc * m_loc, axis=1)
    qc = np.sum(inv_var * m_loc * m_loc, axis=1)
    t = qb / qa
    raw = qc - qb * qb / qa
    clamped = raw < 0
    return t, np.where(clamped, 0.0, raw), d_loc, m_loc, qa, qb, clamped


def composite_ray(primitives: list[GaussianPrimitive], origin, direction):
    """Front-to-back compositing along one ray; primitives must be ordered by t* ascending.

    Returns (color, depth along the ray, weights).
    """
    o = as_vec3(origin, "ray origin")
    d = as_vec3(direction, "ray direction")
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise InvalidInputError("ray direction must be unit norm")
    color = np.zeros(3)
    depth = 0.0
    weights: list[float] = []
    transmittance = 1.0
    prev_t = -np.inf
    for g in primitives:
        rot = quaternion_to_matrix(g.rotation)[None]
        t, dmin, *_ = ray_quadratic((g.mean - o)[None], d[None], rot, inverse_variances(g.scale)[None])
        t, dmin = float(t[0]), float(dmin[0])
        if t < prev_t - _SORT_TOL:
            raise InvalidInputError("primitives are not sorted by depth along the ray")
        prev_t = t
        a = g.opacity * np.exp(-0.5 * dmin)
        w = a * transmittance
        transmittance *= 1.0 - a
        weights.append(w)
        color = color + w * g.color
        depth += w * t
    return color, depth, weights


def _projected_boxes(gmap: GaussianMap, K: CameraIntrinsics, pose: Pose):
    """Conservative pixel boxes of each primitive's 3σ bounding sphere."""
    r_wc = quaternion_to_matrix(pose.rotation)
    p = (gmap.means - pose.translation) @ r_wc
    radius = 3.0 * np.sqrt(np.max(gmap.scales**2, axis=1) + 1e-12) * (1.0 + 1e-9)
    z_near = p[:, 2] - radius
    z_far = p[:, 2] + radius
    visible = z_far > 0
    lo = np.zeros((len(gmap), 3), dtype=np.int64)
    hi = np.zeros((len(gmap), 3), dtype=np.int64)
    hi[:, 0] = K.width - 1
    hi[:, 1] = K.height - 1
    front = visible & (z_near > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis, (f, c, size) in enumerate(((K.fx, K.cx, K.width), (K.fy, K.cy, K.height))):
            lo_c = p[:, axis] - radius
            hi_c = p[:, axis] + radius
            cand = np.stack([lo_c / z_near, lo_c / z_far, hi_c / z_near, hi_c / z_far])
            pmin = c + f * cand.min(axis=0)
            pmax = c + f * cand.max(axis=0)
            lo[front, axis] = np.clip(np.floor(pmin[front]), 0, size)
            hi[front, axis] = np.clip(np.ceil(pmax[front]), -1, size - 1)
    lo[~visible] = 1
    hi[~visible] = 0
    return lo, hi


def ray_pairs(gmap: GaussianMap, K: CameraIntrinsics, pose: Pose) -> RayPairs:
    """Cull, evaluate and order all contributions for one camera."""
    if len(gmap) == 0:
        return _empty_pairs()
    lo, hi = _projected_boxes(gmap, K, pose)
    owner, cells = expand_boxes(lo, hi)
    prim = owner
    us, vs = cells[:, 0], cells[:, 1]
    r_wc = quaternion_to_matrix(pose.rotation)
    cam = camera_rays(K, us, vs)
    cam = cam / np.linalg.norm(cam, axis=1, keepdims=True)
    dirs = cam @ r_wc.T
    offset = gmap.means[prim] - pose.translation
    rot = gmap.rotation_matrices()[prim]
    inv_var = gmap.inverse_variances()[prim]
    t, dmin, d_loc, m_loc, qa, qb, clamped = ray_quadratic(offset, dirs, rot, inv_var)
    keep = (dmin <= NEIGHBOR_CUTOFF) & (t > 0)
    pixel = (vs * K.width + us)[keep]
    prim, t, dmin = prim[keep], t[keep], dmin[keep]
    order = np.lexsort((prim, t, pixel))
    pixel, prim, t, dmin = pixel[order], prim[order], t[order], dmin[order]
    sel = np.flatnonzero(keep)[order]

    gauss = np.exp(-0.5 * dmin)
    alpha = gmap.opacities[prim] * gauss
    n = pixel.size
    if n:
        first = np.concatenate([[True], pixel[1:] != pixel[:-1]])
        starts = np.maximum.accumulate(np.where(first, np.arange(n), 0))
        rank = np.arange(n) - starts
        by_rank = np.argsort(rank, kind="stable")
        bounds = np.flatnonzero(np.diff(rank[by_rank])) + 1
        groups = np.split(by_rank, bounds)
    else:
        groups = []
    trans = np.empty(n)
    running = np.ones(K.width * K.height)
    for g in groups:
        pix = pixel[g]
        trans[g] = running[pix]
        running[pix] *= 1.0 - alpha[g]
    return RayPairs(
        pixel=pixel,
        prim=prim,
        t=t,
        dmin=dmin,
        gauss=gauss,
        alpha=alpha,
        transmittance=trans,
        weight=alpha * trans,
        rank_groups=groups,
        dirs=dirs[sel],
        offset=offset[sel],
        d_loc=d_loc[sel],
        m_loc=m_loc[sel],
        inv_var=inv_var[sel],
        quad_a=qa[sel],
        quad_b=qb[sel],
        clamped=clamped[sel],
    )


def _empty_pairs() -> RayPairs:
    e_i = np.zeros(0, dtype=np.int64)
    e_f = np.zeros(0)
    e_3 = np.zeros((0, 3))
    return RayPairs(e_i, e_i, e_f, e_f, e_f, e_f, e_f, e_f, [], e_3, e_3, e_3, e_3, e_3, e_f, e_f, e_f.astype(bool))


def pixel_depth_scale(K: CameraIntrinsics) -> np.ndarray:
    """z-component of each pixel's unit camera ray (turns ray parameter into camera depth)."""
    us, vs = np.meshgrid(np.arange(K.width), np.arange(K.height))
    cam = camera_rays(K, us.reshape(-1), vs.reshape(-1))
    return 1.0 / np.linalg.norm(cam, axis=1)


def composite_pairs(gmap: GaussianMap, K: CameraIntrinsics, pairs: RayPairs) -> RenderedFrame:
    npix = K.width * K.height
    w = pairs.weight
    color = np.stack(
        [np.bincount(pairs.pixel, weights=w * gmap.colors[pairs.prim, c], minlength=npix) for c in range(3)],
        axis=1,
    )
    depth = np.bincount(pairs.pixel, weights=w * pairs.t, minlength=npix) * pixel_depth_scale(K)
    weight = np.bincount(pairs.pixel, weights=w, minlength=npix)
    return RenderedFrame(
        color=color.reshape(K.height, K.width, 3),
        depth=depth.reshape(K.height, K.width),
        weight=weight.reshape(K.height, K.width),
    )


def render_frame(
    gmap: GaussianMap, K: CameraIntrinsics, pose: Pose, width: int | None = None, height: int | None = None
) -> RenderedFrame:
    """Render color, camera-z depth and accumulated weight; background is zero."""
    if width is not None and height is not None and (width, height) != (K.width, K.height):
        K = CameraIntrinsics(K.fx, K.fy, K.cx, K.cy, width, height)
    return composite_pairs(gmap, K, ray_pairs(gmap, K, pose))


def render_frames(gmap: GaussianMap, cameras: list[tuple[CameraIntrinsics, Pose]], threads: int = 1) -> list[RenderedFrame]:
    gmap.rotation_matrices()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(lambda cam: render_frame(gmap, cam[0], cam[1]), cameras))


def quat_matrix_jacobian(quats: np.ndarray) -> np.ndarray:
    """∂R/∂q for unit wxyz quaternions, shape (N, 4, 3, 3)."""
    q = np.asarray(quats, dtype=np.float64)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    zero = np.zeros_like(w)
    jw = np.stack([zero, -z, y, z, zero, -x, -y, x, zero], axis=1)
    jx = np.stack([zero, y, z, y, -2 * x, -w, z, w, -2 * x], axis=1)
    jy = np.stack([-2 * y, x, w, x, zero, z, -w, z, -2 * y], axis=1)
    jz = np.stack([-2 * z, -w, x, w, -2 * z, y, x, y, zero], axis=1)
    return 2.0 * np.stack([jw, jx, jy, jz], axis=1).reshape(-1, 4, 3, 3)


__all__ = [
    "RayPairs",
    "RenderedFrame",
    "composite_pairs",
    "composite_ray",
    "quat_matrix_jacobian",
    "ray_pairs",
    "render_frame",
    "render_frames",
]
