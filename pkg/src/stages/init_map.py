"""init-map: ray-aligned (or isotropic) primitives from every frame of a dataset manifest."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

from src.bench.manifest import read_dataset
from src.gsmap.camera import init_map_from_frames
from src.gsmap.gaussian_map import GaussianMap
from src.gsmap.io import write_map
from src.runner import PipelineConfig
from src.stages.base import Stage, StageContext

logger = logging.getLogger(__name__)


def cmd_init_map(manifest: str | Path, out: str | Path, config: PipelineConfig) -> GaussianMap:
    frames = read_dataset(manifest)
    gmap = init_map_from_frames(
        frames.frames, config.pixel_stride, config.gamma, config.kappa, config.o_init, config.init_mode
    )
    write_map(
        out,
        gmap,
        {
            "stage": "init-map",
            "frames": len(frames),
            "trajectory": frames.trajectory_path,
            "pixel_stride": config.pixel_stride,
            "gamma": config.gamma,
            "kappa": config.kappa,
            "o_init": config.o_init,
            "init_mode": config.init_mode,
        },
    )
    return gmap


class InitMapStage(Stage):
    id = "init-map"
    help = "initialize a Gaussian map from depth frames"

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--manifest", help="dataset manifest JSON")
        parser.add_argument("--out", help="output map file (LEGSMAP1)")

    def run(self, ctx: StageContext) -> int:
        gmap = cmd_init_map(ctx.path("manifest"), ctx.path("out"), ctx.config)
        print(len(gmap))
        return 0
