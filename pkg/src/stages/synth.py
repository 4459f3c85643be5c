"""synth: write a procedural box scene as a dataset plus its ground truth."""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

from src.bench.manifest import TRAJECTORY_NAME, write_dataset
from src.bench.synth import SceneSpec, SyntheticScene, generate_scene
from src.errors import SchemaError
from src.gsmap.io import write_map
from src.occproj.io import write_occupancy, write_text_embeddings
from src.stages.base import Stage, StageContext

logger = logging.getLogger(__name__)

GT_NAME = "gt.occ"
TEXTS_NAME = "texts.json"
SEED_MAP_NAME = "seed.map"


def load_scene(path: str | Path, seed: int | None = None, default_seed: int = 0) -> SceneSpec:
    """A seed given explicitly wins over the scene file's, which wins over default_seed."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise SchemaError("scene", f"{path} must hold a JSON object")
    if seed is not None:
        data["seed"] = seed
    else:
        data.setdefault("seed", default_seed)
    return SceneSpec.from_mapping(data)


def cmd_synth(spec: SceneSpec, out: str | Path) -> SyntheticScene:
    out = Path(out)
    scene = generate_scene(spec)
    write_dataset(out, scene.frames)
    write_occupancy(out / GT_NAME, scene.ground_truth)
    write_text_embeddings(out / TEXTS_NAME, scene.texts)
    write_map(
        out / SEED_MAP_NAME,
        scene.seed_map,
        {"stage": "synth", "seed": spec.seed, "trajectory": str((out / TRAJECTORY_NAME).resolve())},
    )
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return scene


class SynthStage(Stage):
    id = "synth"
    help = "generate a synthetic box scene with ground truth"

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--scene", help="scene description JSON")
        parser.add_argument("--out", help="output dataset directory")

    def run(self, ctx: StageContext) -> int:
        seed = ctx.config.seed if "seed" in ctx.explicit else None
        spec = load_scene(ctx.path("scene"), seed, ctx.config.seed)
        scene = cmd_synth(spec, ctx.path("out"))
        print(f"{len(scene.frames)} {int(scene.ground_truth.occupancy.sum())}")
        return 0
