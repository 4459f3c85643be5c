"""CLI entry: python -m src.cli <stage> [--config path] [--seed n] [--threads n] [--verbose] ..."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Sequence

import yaml
from dotenv import load_dotenv

from src.errors import InvalidInputError, NumericalFailureError
from src.runner import DEFAULT_CONFIG, FIELD_CHOICES, build_config, field_kinds, load_json_layer
from src.splatopt.optimizer import OptimizerConfig
from src.stages import STAGES, StageContext, get_stage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _setup_logging(verbose: bool = False, log_file: str | None = None) -> None:
    """Stderr (and optional file) handler; no timestamps so reruns log identically."""
    fmt = "%(levelname)s %(name)s %(message)s"
    formatter = logging.Formatter(fmt)
    root = logging.getLogger()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not root.handlers:
        h_stderr = logging.StreamHandler(sys.stderr)
        h_stderr.setFormatter(formatter)
        root.addHandler(h_stderr)
    if log_file:
        h_file = logging.FileHandler(log_file, encoding="utf-8")
        h_file.setFormatter(formatter)
        root.addHandler(h_file)


def _global_parser() -> argparse.ArgumentParser:
    """Flags accepted before or after the subcommand; unset flags stay absent from the namespace."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "--config",
        default=argparse.SUPPRESS,
        help=f"Config file path (default: {DEFAULT_CONFIG})",
    )
    parent.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="Debug logging")
    parent.add_argument("--log-file", dest="log_file", default=argparse.SUPPRESS, help="Also log to this file")
    for name, kind in field_kinds().items():
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            parent.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS)
        else:
            parent.add_argument(
                flag,
                dest=name,
                type=kind,
                choices=FIELD_CHOICES.get(name),
                default=argparse.SUPPRESS,
                help=f"config: {name}",
            )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _global_parser()
    parser = argparse.ArgumentParser(
        prog="python -m src.cli",
        description="Open-vocabulary occupancy from language-embedded Gaussian maps",
        parents=[parent],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage_id, stage in STAGES.items():
        stage_parser = sub.add_parser(stage_id, help=stage.help, parents=[parent])
        stage.add_arguments(stage_parser)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {name: getattr(args, name) for name in field_kinds() if hasattr(args, name)}


def _run(args: argparse.Namespace) -> int:
    overrides = _overrides(args)
    layers = []
    optimizer_config = getattr(args, "optimizer_config", None)
    if optimizer_config:
        layer = load_json_layer(optimizer_config)
        OptimizerConfig.from_mapping(layer)
        layers.append(layer)
    config = build_config(getattr(args, "config", DEFAULT_CONFIG), overrides, layers)
    stage = get_stage(args.command)
    logger.info("running %s (seed %d, %d threads)", stage.id, config.seed, config.threads)
    return stage.run(StageContext(config, args, overrides))


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(getattr(args, "verbose", False), getattr(args, "log_file", None))

    try:
        return _run(args)
    except NumericalFailureError as e:
        logger.error("numerical failure at %s", e)
        return EXIT_NUMERICAL
    except ArithmeticError as e:
        logger.error("numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (InvalidInputError, yaml.YAMLError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO
    except ValueError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except Exception:
        logger.exception("%s failed", args.command)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
