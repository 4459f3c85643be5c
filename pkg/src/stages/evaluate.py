"""eval: align a predicted map to the ground-truth frame and report IoU / mIoU."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from src.core.trajectory import read_trajectory
from src.errors import SchemaError
from src.eval.metrics import EvalReport
from src.eval.protocol import align_and_evaluate
from src.gsmap.io import read_map
from src.occproj.grid import TextEmbeddingSet
from src.occproj.io import read_occupancy, read_text_embeddings
from src.runner import PipelineConfig
from src.sinks import get_sink
from src.stages.base import Stage, StageContext

logger = logging.getLogger(__name__)

# mono reconstructions are up to scale, RGB-D ones are metric
MODES = {"mono": True, "rgbd": False}


def parse_classes(raw: str | None, texts: TextEmbeddingSet | None) -> list[int] | None:
    """Comma list of class ids or category names; names need the text set."""
    if not raw:
        return None
    out = []
    for token in (t.strip() for t in raw.split(",")):
        if not token:
            continue
        if token.isdigit():
            out.append(int(token))
        elif texts is None:
            raise SchemaError("classes", f"category name {token!r} needs --texts")
        else:
            out.append(texts.class_ids[texts.index_of(token)])
    return out


def cmd_eval(
    map_path: str | Path,
    traj_path: str | Path | None,
    gt_path: str | Path,
    gt_traj_path: str | Path,
    mode: str,
    config: PipelineConfig,
    texts_path: str | Path | None = None,
    classes: str | None = None,
    top_k: int | None = None,
) -> EvalReport:
    if mode not in MODES:
        raise SchemaError("mode", f"expected one of {sorted(MODES)}, got {mode!r}")
    gt = read_occupancy(gt_path)
    gmap = read_map(map_path)
    if traj_path is None:
        traj_path = gmap.metadata.get("trajectory")
        if traj_path is None:
            raise SchemaError("paths.traj", "no --traj given and the map records no trajectory")
    pred_traj = read_trajectory(traj_path)
    gt_traj = read_trajectory(gt_traj_path)
    texts = read_text_embeddings(texts_path) if texts_path is not None else None
    return align_and_evaluate(
        gmap,
        pred_traj,
        gt,
        gt_traj,
        estimate_scale=MODES[mode],
        texts=texts,
        tau_occ=config.tau_occ,
        class_subset=parse_classes(classes, texts),
        top_k=top_k,
        threads=config.threads,
    )


class EvalStage(Stage):
    id = "eval"
    help = "align, project and score a predicted map against ground truth"

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--map", help="predicted map file")
        parser.add_argument("--traj", help="predicted trajectory (TUM format; default: the one recorded with the map)")
        parser.add_argument("--gt", help="ground-truth occupancy file")
        parser.add_argument("--gt-traj", dest="gt_traj", help="ground-truth trajectory (TUM format)")
        parser.add_argument("--mode", choices=sorted(MODES), default="rgbd", help="mono: Sim(3), rgbd: SE(3)")
        parser.add_argument("--texts", help="text embedding set; enables class metrics")
        parser.add_argument("--classes", help="comma list of class ids or names for mIoU")
        parser.add_argument("--top-k", dest="top_k", type=int, help="mIoU over the K most frequent GT classes")
        parser.add_argument("--format", choices=["json", "table"], default="json", help="report format")
        parser.add_argument("--out", help="report file (default: standard output)")

    def run(self, ctx: StageContext) -> int:
        report = cmd_eval(
            ctx.path("map"),
            ctx.path("traj", required=False),
            ctx.path("gt"),
            ctx.path("gt_traj"),
            ctx.args.mode,
            ctx.config,
            ctx.path("texts", required=False),
            ctx.args.classes,
            ctx.args.top_k,
        )
        out = ctx.path("report", required=False) if ctx.args.out is None else Path(ctx.args.out)
        get_sink(ctx.args.format)().emit(report.to_dict(), {"path": str(out) if out else None})
        return 0
