"""query: per-voxel similarity to one category, exported as CSV."""
from __future__ import annotations

import argparse
import logging
from pathlib import Path

import numpy as np

from src.occproj.io import read_occupancy, read_text_embeddings, write_similarity_csv
from src.occproj.projection import similarity_volume
from src.stages.base import Stage, StageContext

logger = logging.getLogger(__name__)


def cmd_query(occupancy: str | Path, texts_path: str | Path, category: str, out: str | Path) -> np.ndarray:
    field = read_occupancy(occupancy)
    texts = read_text_embeddings(texts_path)
    volume = similarity_volume(field, texts, category)
    n = write_similarity_csv(out, field.spec, volume)
    logger.info("wrote %d voxel scores for %r to %s", n, category, out)
    return volume


class QueryStage(Stage):
    id = "query"
    help = "score every featured voxel against a category"

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--occupancy", help="occupancy file with voxel features")
        parser.add_argument("--texts", help="text embedding set (JSON manifest)")
        parser.add_argument("--category", required=True, help="category name to score")
        parser.add_argument("--out", help="output CSV (i,j,k,similarity)")

    def run(self, ctx: StageContext) -> int:
        volume = cmd_query(ctx.path("occupancy"), ctx.path("texts"), ctx.args.category, ctx.path("out"))
        scored = volume[~np.isnan(volume)]
        if scored.size:
            print(f"{scored.size} {scored.max()!r}")
        else:
            print("0")
        return 0
