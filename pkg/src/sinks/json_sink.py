"""JSON report sink."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

from src.sinks.base import ReportSink

logger = logging.getLogger(__name__)


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


class JsonSink(ReportSink):
    """Sorted-key JSON, byte-stable across reruns."""

    def emit(self, report: dict, sink_config: dict) -> None:
        text = render_json(report)
        path = sink_config.get("path")
        if path:
            Path(path).write_text(text, encoding="utf-8")
            logger.info("wrote report to %s", path)
        else:
            sys.stdout.write(text)
