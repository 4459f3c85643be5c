"""Stage abstraction: one pipeline subcommand = one Stage with id + run(ctx)."""
from __future__ import annotations

import argparse
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

from src.errors import SchemaError
from src.runner import PipelineConfig


@dataclass
class StageContext:
    """Effective config plus the parsed subcommand arguments."""

    config: PipelineConfig
    args: argparse.Namespace
    explicit: dict = field(default_factory=dict)  # config fields given on the command line

    @property
    def threads(self) -> int:
        return self.config.threads

    def path(self, name: str, required: bool = True) -> Path | None:
        """Argument value, else ``paths.<name>`` from the config file."""
        value = getattr(self.args, name, None) or self.config.paths.get(name)
        if value is None:
            if required:
                raise SchemaError(f"paths.{name}", f"no --{name.replace('_', '-')} given and none in config")
            return None
        return Path(value)


class Stage(ABC):
    id: str = ""
    help: str = ""

    @staticmethod
    def add_arguments(parser: argparse.ArgumentParser) -> None:
        """Register subcommand-specific arguments."""

    @abstractmethod
    def run(self, ctx: StageContext) -> int:
        """Run the stage; returns the process exit code."""
        ...
