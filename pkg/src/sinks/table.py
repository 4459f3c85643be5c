"""Human-readable table sink for evaluation reports."""
from __future__ import annotations

import sys
from pathlib import Path

from src.sinks.base import ReportSink


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    return f"{value:.4f}"


def render_table(report: dict) -> str:
    lines = [f"IoU   {_fmt(report.get('iou'))}", f"mIoU  {_fmt(report.get('miou'))}"]
    per_class = report.get("per_class_iou") or {}
    if per_class:
        names = report.get("class_names") or {}
        counts = report.get("counts") or {}
        width = max(len(names.get(c, c)) for c in per_class)
        width = max(width, len("class"))
        lines.append("")
        lines.append(f"{'class':<{width}}  {'IoU':>7}  {'TP':>8}  {'FP':>8}  {'FN':>8}")
        for c in sorted(per_class, key=int):
            n = counts.get(c, {})
            lines.append(
                f"{names.get(c, c):<{width}}  {_fmt(per_class[c]):>7}  "
                f"{n.get('tp', 0):>8}  {n.get('fp', 0):>8}  {n.get('fn', 0):>8}"
            )
    transform = report.get("transform")
    if transform:
        lines.append("")
        lines.append(f"alignment scale {transform['scale']:.6g}, rms {transform.get('rms_residual', 0.0):.4g} m")
    return "\n".join(lines) + "\n"


class TableSink(ReportSink):
    def emit(self, report: dict, sink_config: dict) -> None:
        text = render_table(report)
        path = sink_config.get("path")
        if path:
            Path(path).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
