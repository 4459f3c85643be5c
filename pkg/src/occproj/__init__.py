"""Gaussian-to-occupancy projection and open-vocabulary voxel queries."""
from __future__ import annotations

from src.occproj.grid import (
    GridSpec,
    OccupancyField,
    TextEmbeddingSet,
    compose_occupancy,
    expected_feature,
    responsibilities,
    spatial_support,
    text_similarity,
)
from src.occproj.projection import project, project_bruteforce, similarity_volume

__all__ = [
    "GridSpec",
    "OccupancyField",
    "TextEmbeddingSet",
    "compose_occupancy",
    "expected_feature",
    "project",
    "project_bruteforce",
    "responsibilities",
    "similarity_volume",
    "spatial_support",
    "text_similarity",
]
