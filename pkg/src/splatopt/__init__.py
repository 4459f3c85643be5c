"""Differentiable Gaussian rendering and anchored shape/appearance optimization."""
from __future__ import annotations

from src.splatopt.ambiguity import AmbiguityWitness, ambiguity_witness
from src.splatopt.loss import Gradients, loss_gradient, rendering_loss
from src.splatopt.optimizer import OptimizeResult, OptimizerConfig, optimize_anchored, write_loss_trace
from src.splatopt.render import RenderedFrame, composite_ray, render_frame

__all__ = [
    "AmbiguityWitness",
    "Gradients",
    "OptimizeResult",
    "OptimizerConfig",
    "RenderedFrame",
    "ambiguity_witness",
    "composite_ray",
    "loss_gradient",
    "optimize_anchored",
    "render_frame",
    "rendering_loss",
    "write_loss_trace",
]
