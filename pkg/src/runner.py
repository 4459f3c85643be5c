"""Pipeline config: YAML file + optional JSON layer + command-line overrides, validated up front."""
from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from src.errors import SchemaError
from src.gsmap.camera import DEFAULT_GAMMA, DEFAULT_KAPPA, INIT_MODES, INIT_RAY_ALIGNED
from src.splatopt.optimizer import OptimizerConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "config/config.yaml"

# Match ${VAR_NAME} in path values
ENV_PLACEHOLDER_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass
class PipelineConfig:
    gamma: float = DEFAULT_GAMMA
    kappa: float = DEFAULT_KAPPA
    o_init: float = 0.5
    init_mode: str = INIT_RAY_ALIGNED
    beta: float = 1.0
    tau_occ: float = 0.5
    voxel_size: float = 0.08
    pixel_stride: int = 4
    frame_stride: int = 2
    max_range: float = 10.0
    association_radius: float = 0.08
    feature_dim: int = 0  # 0: take the dimension of the embedding rasters
    seed: int = 0
    lr_scale: float = 1e-6
    lr_rotation: float = 1e-5
    lr_opacity: float = 1e-2
    lr_color: float = 1e-2
    max_iters: int = 100
    tol: float = 1e-9
    optimize_means: bool = False
    lr_mean: float = 1e-6
    tolerance_voxels: float = 1.0
    dilate: bool = False
    depth_factor: float = 1e-3
    threads: int = 1
    paths: dict[str, str] = field(default_factory=dict)

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            beta=self.beta,
            lr_scale=self.lr_scale,
            lr_rotation=self.lr_rotation,
            lr_opacity=self.lr_opacity,
            lr_color=self.lr_color,
            max_iters=self.max_iters,
            tol=self.tol,
            optimize_means=self.optimize_means,
            lr_mean=self.lr_mean,
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _positive(v) -> bool:
    return v > 0


def _non_negative(v) -> bool:
    return v >= 0


def _unit(v) -> bool:
    return 0 <= v <= 1


def _at_least_one(v) -> bool:
    return v >= 1


# field -> (domain check, human description)
FIELD_DOMAINS: dict[str, tuple[Callable[[Any], bool], str]] = {
    "gamma": (_positive, "> 0"),
    "kappa": (_positive, "> 0"),
    "o_init": (_unit, "in [0, 1]"),
    "beta": (_non_negative, ">= 0"),
    "tau_occ": (_unit, "in [0, 1]"),
    "voxel_size": (_positive, "> 0"),
    "pixel_stride": (_at_least_one, ">= 1"),
    "frame_stride": (_at_least_one, ">= 1"),
    "max_range": (_positive, "> 0"),
    "association_radius": (_positive, "> 0"),
    "feature_dim": (_non_negative, ">= 0"),
    "seed": (lambda v: 0 <= v < 2**64, "in [0, 2^64)"),
    "lr_scale": (_non_negative, ">= 0"),
    "lr_rotation": (_non_negative, ">= 0"),
    "lr_opacity": (_non_negative, ">= 0"),
    "lr_color": (_non_negative, ">= 0"),
    "lr_mean": (_non_negative, ">= 0"),
    "init_mode": (lambda v: v in INIT_MODES, "one of " + ", ".join(INIT_MODES)),
    "max_iters": (_non_negative, ">= 0"),
    "tol": (_non_negative, ">= 0"),
    "tolerance_voxels": (_non_negative, ">= 0"),
    "depth_factor": (_positive, "> 0"),
    "threads": (_at_least_one, ">= 1"),
}


def _resolve_token(raw: str) -> str:
    """Replace ${ENV_VAR} with os.environ values; unknown names are left as written."""

    def repl(match: re.Match[str]) -> str:
        key = match.group(1)
        return os.environ.get(key, match.group(0))

    return ENV_PLACEHOLDER_RE.sub(repl, raw)


def load_config(path: str | Path) -> dict:
    """Load YAML (or JSON) mapping from path; an empty file is an empty mapping."""
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise SchemaError("config", f"{path} must hold a mapping at top level")
    return data


def load_json_layer(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise SchemaError("optimizer_config", f"{path} must hold a JSON object")
    return data


def _coerce(name: str, value: Any, kind: type) -> Any:
    if kind is str:
        if not isinstance(value, str):
            raise SchemaError(name, f"expected a string, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise SchemaError(name, f"expected true/false, got {value!r}")
        return value
    if isinstance(value, bool):
        raise SchemaError(name, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise SchemaError(name, f"expected an integer, got {value!r}")
        return value
    if not isinstance(value, (int, float)):
        raise SchemaError(name, f"expected a number, got {value!r}")
    return float(value)


_KINDS = {"float": float, "int": int, "bool": bool, "str": str}

# string fields and the values they accept
FIELD_CHOICES: dict[str, tuple[str, ...]] = {"init_mode": INIT_MODES}


def field_kinds() -> dict[str, type]:
    """Scalar PipelineConfig fields and their types (paths excluded)."""
    return {f.name: _KINDS[f.type] for f in fields(PipelineConfig) if f.type in _KINDS}


def validate_config(data: Mapping[str, Any]) -> PipelineConfig:
    """Build a PipelineConfig; unknown keys and out-of-domain values raise SchemaError naming the field."""
    kinds = field_kinds()
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key == "paths":
            if not isinstance(value, dict) or not all(isinstance(v, str) for v in value.values()):
                raise SchemaError("paths", "must map names to path strings")
            kwargs["paths"] = {str(k): _resolve_token(v) for k, v in value.items()}
            continue
        if key not in kinds:
            raise SchemaError(key, "unknown config key")
        value = _coerce(key, value, kinds[key])
        check = FIELD_DOMAINS.get(key)
        if check is not None and not check[0](value):
            raise SchemaError(key, f"must be {check[1]}, got {value!r}")
        kwargs[key] = value
    return PipelineConfig(**kwargs)


def build_config(
    config_path: str | Path | None,
    overrides: Mapping[str, Any] | None = None,
    layers: list[Mapping[str, Any]] | None = None,
) -> PipelineConfig:
    """Defaults < config file < extra layers (in order) < overrides."""
    merged: dict[str, Any] = {}
    if config_path is not None:
        path = Path(config_path)
        if path.exists():
            merged.update(load_config(path))
        elif str(config_path) != DEFAULT_CONFIG:
            raise FileNotFoundError(f"config not found: {path}")
    for layer in layers or []:
        merged.update(layer)
    for key, value in (overrides or {}).items():
        if key == "paths":
            merged.setdefault("paths", {})
            merged["paths"] = {**merged["paths"], **value}
        else:
            merged[key] = value
    config = validate_config(merged)
    logger.debug("effective config: %s", config.to_dict())
    return config
