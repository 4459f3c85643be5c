"""Photometric + depth rendering loss and its analytic gradient.

Means are anchored, so their gradient is reported as zeros unless with_means
is set (the free-means ablation). Per-frame work runs in a thread pool;
per-primitive sums are reduced in frame order so the result does not depend on
the thread count.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from src.errors import InvalidInputError
from src.gsmap.camera import Frame, check_raster
from src.gsmap.gaussian_map import GaussianMap
from src.splatopt.render import (
    RayPairs,
    RenderedFrame,
    composite_pairs,
    pixel_depth_scale,
    quat_matrix_jacobian,
    ray_pairs,
)

logger = logging.getLogger(__name__)


@dataclass
class Gradients:
    loss: float
    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: np.ndarray
    color: np.ndarray


def observed_valid(observed_depth: np.ndarray) -> np.ndarray:
    d = np.asarray(observed_depth, dtype=np.float64)
    return np.isfinite(d) & (d > 0)


def rendering_loss(
    rendered: RenderedFrame,
    observed_color: np.ndarray,
    observed_depth: np.ndarray,
    beta: float = 1.0,
    valid: np.ndarray | None = None,
) -> float:
    """Σ ‖C - I‖² + β Σ_valid (D - D_obs)²; invalid observed depth drops only the depth term."""
    if beta < 0:
        raise InvalidInputError(f"beta must be non-negative, got {beta}")
    color = np.asarray(observed_color, dtype=np.float64)
    depth = np.asarray(observed_depth, dtype=np.float64)
    if color.shape != rendered.color.shape or depth.shape != rendered.depth.shape:
        raise InvalidInputError(
            f"observation shapes {color.shape}/{depth.shape} do not match render {rendered.color.shape}"
        )
    if valid is None:
        valid = observed_valid(depth)
    photo = float(np.sum((rendered.color - color) ** 2))
    dres = np.where(valid, rendered.depth - np.where(valid, depth, 0.0), 0.0)
    return photo + beta * float(np.sum(dres**2))


def _check_frame(frame: Frame) -> None:
    if frame.color is None:
        raise InvalidInputError("frames used for optimization need a color image")
    check_raster(frame.color.shape, frame.intrinsics, "color image")
    check_raster(frame.depth.depth.shape, frame.intrinsics, "depth raster")


def frame_loss(gmap: GaussianMap, frame: Frame, beta: float) -> float:
    pairs = ray_pairs(gmap, frame.intrinsics, frame.pose)
    rendered = composite_pairs(gmap, frame.intrinsics, pairs)
    return rendering_loss(rendered, frame.color, frame.depth.depth, beta, frame.depth.valid)


def _frame_backward(gmap: GaussianMap, frame: Frame, beta: float):
    """Loss and per-primitive gradient contributions for one frame."""
    K = frame.intrinsics
    pairs: RayPairs = ray_pairs(gmap, K, frame.pose)
    rendered = composite_pairs(gmap, K, pairs)
    valid = frame.depth.valid
    loss = rendering_loss(rendered, frame.color, frame.depth.depth, beta, valid)
    n = len(gmap)
    if pairs.pixel.size == 0:
        return loss, np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 4)), np.zeros(n), np.zeros((n, 3))

    g_color = 2.0 * (rendered.color - np.asarray(frame.color, dtype=np.float64)).reshape(-1, 3)
    g_depth = (2.0 * beta * (rendered.depth - frame.depth.depth) * valid).reshape(-1)
    cz = pixel_depth_scale(K)

    pix, prim = pairs.pixel, pairs.prim
    colors = gmap.colors[prim]
    # per-pair contribution of (c_k, t_k) to the loss
    err = np.sum(g_color[pix] * colors, axis=1) + g_depth[pix] * cz[pix] * pairs.t

    behind = np.empty_like(err)
    acc = np.zeros(K.width * K.height)
    for g in reversed(pairs.rank_groups):
        p = pix[g]
        behind[g] = acc[p]
        acc[p] = err[g] * pairs.alpha[g] + (1.0 - pairs.alpha[g]) * acc[p]

    d_alpha = pairs.transmittance * (err - behind)
    d_color = g_color[pix] * pairs.weight[:, None]
    d_t = g_depth[pix] * cz[pix] * pairs.weight
    d_opacity = d_alpha * pairs.gauss
    d_dmin = np.where(pairs.clamped, 0.0, d_alpha * (-0.5 * pairs.alpha))

    qa, qb = pairs.quad_a, pairs.quad_b
    d_qa = d_dmin * (qb * qb) / (qa * qa) - d_t * qb / (qa * qa)
    d_qb = d_dmin * (-2.0 * qb / qa) + d_t / qa
    d_qc = d_dmin

    lam, dl, ml = pairs.inv_var, pairs.d_loc, pairs.m_loc
    d_lam = d_qa[:, None] * dl * dl + d_qb[:, None] * dl * ml + d_qc[:, None] * ml * ml
    s = gmap.scales[prim]
    d_scale = d_lam * (-2.0 * s * lam * lam)

    g_dl = 2.0 * d_qa[:, None] * lam * dl + d_qb[:, None] * lam * ml
    g_ml = d_qb[:, None] * lam * dl + 2.0 * d_qc[:, None] * lam * ml
    g_rot = pairs.dirs[:, :, None] * g_dl[:, None, :] + pairs.offset[:, :, None] * g_ml[:, None, :]
    q = gmap.rotations[prim]
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    q_hat = q / qn
    d_qhat = np.einsum("nkij,nij->nk", quat_matrix_jacobian(q_hat), g_rot)
    d_quat = (d_qhat - q_hat * np.sum(q_hat * d_qhat, axis=1, keepdims=True)) / qn
    # m_loc = Rᵀ (μ - o)
    d_mean = np.einsum("nij,nj->ni", gmap.rotation_matrices()[prim], g_ml)

    def reduce(values: np.ndarray) -> np.ndarray:
        if values.ndim == 1:
            return np.bincount(prim, weights=values, minlength=n)
        return np.stack([np.bincount(prim, weights=values[:, c], minlength=n) for c in range(values.shape[1])], axis=1)

    return loss, reduce(d_mean), reduce(d_scale), reduce(d_quat), reduce(d_opacity), reduce(d_color)


def total_loss(gmap: GaussianMap, frames: list[Frame], beta: float = 1.0, threads: int = 1) -> float:
    for f in frames:
        _check_frame(f)
    gmap.rotation_matrices()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        losses = list(pool.map(lambda f: frame_loss(gmap, f, beta), frames))
    return float(sum(losses))


def loss_gradient(
    gmap: GaussianMap, frames: list[Frame], beta: float = 1.0, threads: int = 1, with_means: bool = False
) -> Gradients:
    """Exact gradient of the summed rendering loss w.r.t. scale, rotation, opacity and color (and means)."""
    if beta < 0:
        raise InvalidInputError(f"beta must be non-negative, got {beta}")
    for f in frames:
        _check_frame(f)
    n = len(gmap)
    gmap.rotation_matrices()
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda f: _frame_backward(gmap, f, beta), frames))
    out = Gradients(
        loss=0.0,
        mean=np.zeros((n, 3)),
        scale=np.zeros((n, 3)),
        rotation=np.zeros((n, 4)),
        opacity=np.zeros(n),
        color=np.zeros((n, 3)),
    )
    for loss, g_m, g_s, g_q, g_o, g_c in parts:
        out.loss += loss
        if with_means:
            out.mean += g_m
        out.scale += g_s
        out.rotation += g_q
        out.opacity += g_o
        out.color += g_c
    return out
