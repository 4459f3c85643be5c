"""project: Gaussian map -> dense occupancy grid (OCCGRID1)."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from src.errors import SchemaError
from src.gsmap.io import read_map
from src.occproj.grid import GridSpec, OccupancyField
from src.occproj.io import read_occupancy, read_text_embeddings, write_occupancy
from src.occproj.projection import project
from src.runner import PipelineConfig
from src.stages.base import Stage, StageContext

logger = logging.getLogger(__name__)


def grid_from_args(
    gt: str | Path | None, origin: list[float] | None, dims: list[int] | None, voxel_size: float
) -> GridSpec:
    """The ground-truth grid when given, else origin + dims at the configured voxel size."""
    if gt is not None:
        return read_occupancy(gt).spec
    if origin is None or dims is None:
        raise SchemaError("grid", "give --gt or both --origin and --dims")
    if any(n < 1 for n in dims):
        raise SchemaError("dims", f"every axis needs at least one voxel, got {dims}")
    return GridSpec(tuple(float(v) for v in origin), tuple(int(n) for n in dims), voxel_size)


def cmd_project(
    map_path: str | Path,
    out: str | Path,
    spec: GridSpec,
    config: PipelineConfig,
    texts_path: str | Path | None = None,
) -> OccupancyField:
    gmap = read_map(map_path)
    texts = read_text_embeddings(texts_path) if texts_path is not None else None
    field = project(gmap, spec, config.tau_occ, texts, config.threads)
    write_occupancy(out, field)
    return field


class ProjectStage(Stage):
    id = "project"
    help = "project a Gaussian map onto a voxel grid"

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--map", help="input map file")
        parser.add_argument("--out", help="output occupancy file (OCCGRID1)")
        parser.add_argument("--gt", help="take the grid from this occupancy file")
        parser.add_argument("--origin", nargs=3, type=float, metavar=("X", "Y", "Z"), help="grid origin (m)")
        parser.add_argument("--dims", nargs=3, type=int, metavar=("NX", "NY", "NZ"), help="grid size in voxels")
        parser.add_argument("--texts", help="text embedding set (JSON manifest)")

    def run(self, ctx: StageContext) -> int:
        spec = grid_from_args(ctx.path("gt", required=False), ctx.args.origin, ctx.args.dims, ctx.config.voxel_size)
        field = cmd_project(
            ctx.path("map"), ctx.path("out"), spec, ctx.config, ctx.path("texts", required=False)
        )
        print(int((field.occupancy >= ctx.config.tau_occ).sum()))
        return 0
