"""Occupancy metrics and the align-then-evaluate protocol."""
from __future__ import annotations

from src.eval.metrics import EvalReport, binary_iou, class_iou, evaluate_fields, top_k_classes
from src.eval.protocol import align_and_evaluate

__all__ = ["EvalReport", "align_and_evaluate", "binary_iou", "class_iou", "evaluate_fields", "top_k_classes"]
