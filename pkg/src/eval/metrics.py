"""IoU and per-class IoU on ground-truth-masked occupancy grids."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from src.errors import InvalidInputError
from src.occproj.grid import DEFAULT_TAU_OCC, LABEL_UNKNOWN, OccupancyField

logger = logging.getLogger(__name__)


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def union(self) -> int:
        return self.tp + self.fp + self.fn

    def iou(self) -> float | None:
        return self.tp / self.union if self.union else None


@dataclass
class EvalReport:
    iou: float
    miou: float | None
    per_class_iou: dict[int, float | None] = field(default_factory=dict)
    class_subset: list[int] = field(default_factory=list)
    counts: dict[int, ClassCounts] = field(default_factory=dict)
    occupancy_counts: ClassCounts = field(default_factory=ClassCounts)
    not_applicable: list[int] = field(default_factory=list)
    transform: dict | None = None
    class_names: dict[int, str] = field(default_factory=dict)
    tau_occ: float = DEFAULT_TAU_OCC

    def to_dict(self) -> dict:
        return {
            "iou": self.iou,
            "miou": self.miou,
            "tau_occ": self.tau_occ,
            "class_subset": self.class_subset,
            "not_applicable": self.not_applicable,
            "per_class_iou": {str(c): v for c, v in self.per_class_iou.items()},
            "class_names": {str(c): n for c, n in self.class_names.items()},
            "counts": {str(c): vars(n) for c, n in self.counts.items()},
            "occupancy_counts": vars(self.occupancy_counts),
            "transform": self.transform,
        }


def _check_same_grid(pred: OccupancyField, gt: OccupancyField) -> np.ndarray:
    if pred.spec != gt.spec:
        raise InvalidInputError(f"prediction grid {pred.spec} differs from ground-truth grid {gt.spec}")
    return gt.label != LABEL_UNKNOWN


def occupancy_counts(pred: OccupancyField, gt: OccupancyField, tau_occ: float = DEFAULT_TAU_OCC) -> ClassCounts:
    known = _check_same_grid(pred, gt)
    p = (pred.occupancy >= tau_occ) & known
    g = (gt.label >= 1) & (gt.label <= 254)
    return ClassCounts(int(np.sum(p & g)), int(np.sum(p & ~g)), int(np.sum(~p & g)))


def binary_iou(pred: OccupancyField, gt: OccupancyField, tau_occ: float = DEFAULT_TAU_OCC) -> float:
    """IoU of predicted occupancy vs ground-truth classes over known voxels; 1 when both are empty."""
    c = occupancy_counts(pred, gt, tau_occ)
    return c.iou() if c.union else 1.0


def class_frequencies(gt: OccupancyField) -> dict[int, int]:
    values, counts = np.unique(gt.label[(gt.label >= 1) & (gt.label <= 254)], return_counts=True)
    return {int(v): int(n) for v, n in zip(values, counts)}


def top_k_classes(gt: OccupancyField, k: int) -> list[int]:
    """The k most frequent ground-truth classes; equal counts go to the lower id."""
    if k < 1:
        raise InvalidInputError(f"top_k must be >= 1, got {k}")
    freq = class_frequencies(gt)
    ranked = sorted(freq, key=lambda c: (-freq[c], c))
    return sorted(ranked[:k])


def class_iou(
    pred: OccupancyField,
    gt: OccupancyField,
    class_subset: list[int] | None = None,
    top_k: int | None = None,
) -> tuple[dict[int, float | None], float, dict[int, ClassCounts]]:
    """Per-class IoU over known voxels and their mean over classes present in pred or gt.

    Classes absent from both map to None and are left out of the mean.
    """
    known = _check_same_grid(pred, gt)
    pl = np.where(known, pred.label, 0)
    gl = np.where(known, gt.label, 0)
    if class_subset is None:
        present = set(np.unique(gl).tolist()) | set(np.unique(pl).tolist())
        class_subset = sorted(c for c in present if 1 <= c <= 254)
    if top_k is not None:
        ranked = top_k_classes(gt, top_k)
        class_subset = [c for c in class_subset if c in ranked]
    per_class: dict[int, float | None] = {}
    counts: dict[int, ClassCounts] = {}
    for c in sorted(set(int(c) for c in class_subset)):
        p = pl == c
        g = gl == c
        counts[c] = ClassCounts(int(np.sum(p & g)), int(np.sum(p & ~g)), int(np.sum(~p & g)))
        per_class[c] = counts[c].iou()
    valid = [v for v in per_class.values() if v is not None]
    if not valid:
        raise InvalidInputError("no evaluated class occurs in prediction or ground truth")
    return per_class, float(np.mean(valid)), counts


def evaluate_fields(
    pred: OccupancyField,
    gt: OccupancyField,
    tau_occ: float = DEFAULT_TAU_OCC,
    class_subset: list[int] | None = None,
    top_k: int | None = None,
    with_classes: bool = True,
) -> EvalReport:
    occ = occupancy_counts(pred, gt, tau_occ)
    report = EvalReport(iou=occ.iou() if occ.union else 1.0, miou=None, occupancy_counts=occ, tau_occ=tau_occ)
    if with_classes:
        per_class, miou, counts = class_iou(pred, gt, class_subset, top_k)
        report.per_class_iou = per_class
        report.miou = miou
        report.counts = counts
        report.class_subset = sorted(per_class)
        report.not_applicable = [c for c, v in per_class.items() if v is None]
    return report
