"""optimize: anchored shape/appearance refinement against the manifest's frames."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from src.bench.manifest import read_dataset
from src.errors import NumericalFailureError
from src.gsmap.io import read_map, write_map
from src.splatopt.optimizer import OptimizeResult, OptimizerConfig, optimize_anchored, write_loss_trace
from src.stages.base import Stage, StageContext

logger = logging.getLogger(__name__)


def cmd_optimize(
    map_path: str | Path,
    manifest: str | Path,
    out: str | Path,
    config: OptimizerConfig,
    trace_path: str | Path | None = None,
    threads: int = 1,
) -> OptimizeResult:
    gmap = read_map(map_path)
    frames = read_dataset(manifest)
    result = optimize_anchored(gmap, frames.frames, config, threads)
    trace = result.loss_trace
    for i in range(1, len(trace)):
        if trace[i] > trace[i - 1]:
            raise NumericalFailureError(i, f"loss increased from {trace[i - 1]!r} to {trace[i]!r}")
    write_map(out, result.gmap, {"stage": "optimize", "optimizer": config.to_dict(), "iterations": result.iterations})
    trace_path = Path(trace_path) if trace_path else Path(str(out) + ".loss.csv")
    write_loss_trace(trace_path, trace)
    return result


class OptimizeStage(Stage):
    id = "optimize"
    help = "optimize scales, rotations, opacities and colors (means fixed unless --optimize-means)"

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--map", help="input map file")
        parser.add_argument("--manifest", help="dataset manifest JSON (color + depth frames)")
        parser.add_argument("--out", help="output map file")
        parser.add_argument("--trace", help="loss trace CSV (default: <out>.loss.csv)")
        parser.add_argument("--optimizer-config", dest="optimizer_config", help="JSON optimizer settings")

    def run(self, ctx: StageContext) -> int:
        result = cmd_optimize(
            ctx.path("map"),
            ctx.path("manifest"),
            ctx.path("out"),
            ctx.config.optimizer(),
            ctx.path("trace", required=False),
            ctx.threads,
        )
        print(f"{result.loss_trace[0]!r} {result.loss_trace[-1]!r} {result.iterations}")
        return 0
