"""Report sink abstraction."""
from __future__ import annotations

from abc import ABC, abstractmethod


class ReportSink(ABC):
    """Abstract sink: emit(report, sink_config) -> None."""

    @abstractmethod
    def emit(self, report: dict, sink_config: dict) -> None:
        """Write the report where sink_config points (``path``), or to stdout."""
        ...
