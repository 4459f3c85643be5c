"""Align a predicted map to the ground-truth frame, project it and score it."""
from __future__ import annotations

import logging
import math

from src.core.geometry import alignment_residual, umeyama_align
from src.core.trajectory import Trajectory, camera_centers, match_trajectories
from src.eval.metrics import EvalReport, evaluate_fields
from src.gsmap.gaussian_map import GaussianMap, transform_map
from src.occproj.grid import DEFAULT_TAU_OCC, OccupancyField, TextEmbeddingSet
from src.occproj.projection import project

logger = logging.getLogger(__name__)


def align_and_evaluate(
    pred_map: GaussianMap,
    pred_trajectory: Trajectory,
    gt_field: OccupancyField,
    gt_trajectory: Trajectory,
    estimate_scale: bool,
    texts: TextEmbeddingSet | None = None,
    tau_occ: float = DEFAULT_TAU_OCC,
    class_subset: list[int] | None = None,
    top_k: int | None = None,
    threads: int = 1,
) -> EvalReport:
    """Sim(3) (estimate_scale) or SE(3) alignment of camera centers, then IoU and mIoU."""
    ia, ib = match_trajectories(pred_trajectory, gt_trajectory)
    src = camera_centers(pred_trajectory)[ia]
    dst = camera_centers(gt_trajectory)[ib]
    transform = umeyama_align(src, dst, estimate_scale=estimate_scale)
    rms = math.sqrt(alignment_residual(transform, src, dst) / ia.size)
    logger.info(
        "aligned %d camera pairs: scale %.6g, rms residual %.4g m", ia.size, transform.scale, rms
    )
    aligned = transform_map(pred_map, transform)
    pred_field = project(aligned, gt_field.spec, tau_occ, texts, threads)
    report = evaluate_fields(pred_field, gt_field, tau_occ, class_subset, top_k, with_classes=texts is not None)
    report.transform = {**transform.to_dict(), "pairs": int(ia.size), "rms_residual": rms}
    if texts is not None:
        report.class_names = {c: n for c, n in zip(texts.class_ids, texts.categories)}
    return report
