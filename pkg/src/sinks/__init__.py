"""Report sinks: JSON and text table; factory by type."""
from __future__ import annotations

from src.sinks.base import ReportSink
from src.sinks.json_sink import JsonSink
from src.sinks.table import TableSink

_SINKS: dict[str, type[ReportSink]] = {
    "json": JsonSink,
    "table": TableSink,
}


def get_sink(sink_type: str) -> type[ReportSink]:
    """Return sink class for given type."""
    if sink_type not in _SINKS:
        raise ValueError(f"Unknown report sink: {sink_type}")
    return _SINKS[sink_type]


__all__ = ["JsonSink", "ReportSink", "TableSink", "get_sink"]
