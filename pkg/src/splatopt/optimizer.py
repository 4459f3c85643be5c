"""Anchored gradient descent: scale, rotation, opacity and color move; means stay fixed unless
optimize_means is set."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from src.errors import InvalidInputError, NumericalFailureError, SchemaError
from src.gsmap.camera import Frame
from src.gsmap.gaussian_map import GaussianMap
from src.gsmap.primitives import SCALE_FLOOR
from src.splatopt.loss import Gradients, loss_gradient, total_loss

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20


@dataclass
class OptimizerConfig:
    beta: float = 1.0
    lr_scale: float = 1e-6
    lr_rotation: float = 1e-5
    lr_opacity: float = 1e-2
    lr_color: float = 1e-2
    max_iters: int = 100
    tol: float = 1e-9
    # ablation: let the means drift with the other parameters
    optimize_means: bool = False
    lr_mean: float = 1e-6

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise SchemaError("beta", f"must be non-negative, got {self.beta}")
        for name in ("lr_scale", "lr_rotation", "lr_opacity", "lr_color", "lr_mean"):
            if getattr(self, name) < 0:
                raise SchemaError(name, f"must be non-negative, got {getattr(self, name)}")
        if self.max_iters < 0:
            raise SchemaError("max_iters", f"must be non-negative, got {self.max_iters}")
        if self.tol < 0:
            raise SchemaError("tol", f"must be non-negative, got {self.tol}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> OptimizerConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                raise SchemaError(key, "unknown optimizer setting")
            if key == "optimize_means":
                if not isinstance(value, bool):
                    raise SchemaError(key, f"expected true or false, got {value!r}")
                kwargs[key] = value
                continue
            caster = int if key == "max_iters" else float
            try:
                kwargs[key] = caster(value)
            except (TypeError, ValueError) as exc:
                raise SchemaError(key, f"expected a number, got {value!r}") from exc
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class OptimizeResult:
    gmap: GaussianMap
    loss_trace: list[float]
    iterations: int
    converged: bool


def _step(gmap: GaussianMap, grads: Gradients, config: OptimizerConfig, step: float) -> GaussianMap:
    # candidates carry no spatial index; optimize_anchored rebuilds it once at the end
    out = gmap.copy(with_index=False)
    if config.optimize_means:
        out.means = gmap.means - step * config.lr_mean * grads.mean
    out.scales = np.maximum(gmap.scales - step * config.lr_scale * grads.scale, SCALE_FLOOR)
    rot = gmap.rotations - step * config.lr_rotation * grads.rotation
    norm = np.linalg.norm(rot, axis=1, keepdims=True)
    out.rotations = np.where(norm > 0, rot / np.where(norm > 0, norm, 1.0), gmap.rotations)
    out.opacities = np.clip(gmap.opacities - step * config.lr_opacity * grads.opacity, 0.0, 1.0)
    out.colors = np.clip(gmap.colors - step * config.lr_color * grads.color, 0.0, 1.0)
    out.invalidate()
    return out


def optimize_anchored(
    gmap: GaussianMap, frames: list[Frame], config: OptimizerConfig | None = None, threads: int = 1
) -> OptimizeResult:
    """Descend the rendering loss with backtracking; the loss trace never increases."""
    config = config or OptimizerConfig()
    if not frames:
        raise InvalidInputError("optimization needs at least one frame")
    current = gmap.copy(with_index=False)
    grads = loss_gradient(current, frames, config.beta, threads, with_means=config.optimize_means)
    loss = grads.loss
    if not math.isfinite(loss):
        raise NumericalFailureError(0)
    trace = [loss]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        step = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            candidate = _step(current, grads, config, step)
            cand_loss = total_loss(candidate, frames, config.beta, threads)
            if not math.isfinite(cand_loss):
                raise NumericalFailureError(it)
            if cand_loss <= loss:
                accepted = candidate
                break
            step *= 0.5
        if accepted is None:
            logger.info("no descent step after %d halvings at iteration %d", MAX_HALVINGS, it)
            converged = True
            it -= 1
            break
        decrease = loss - cand_loss
        current, loss = accepted, cand_loss
        trace.append(loss)
        logger.debug("iteration %d: loss %.9g (step %.3g)", it, loss, step)
        if decrease <= config.tol:
            converged = True
            break
        grads = loss_gradient(current, frames, config.beta, threads, with_means=config.optimize_means)
    current.rebuild_index()
    logger.info("optimized %d primitives: loss %.6g -> %.6g in %d iterations", len(current), trace[0], trace[-1], it)
    return OptimizeResult(gmap=current, loss_trace=trace, iterations=it, converged=converged)


def write_loss_trace(path: str | Path, trace: list[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "loss"])
        for i, value in enumerate(trace):
            writer.writerow([i, repr(float(value))])
