# src/report_generator.py
"""
Report Generation Helpers

Text, CSV and JSON renderings of evaluation and training results:
  - group-level accuracy tables ("Colors | 9 | 82.28" rows plus a Total row)
  - method comparison tables (one row per method, columns aligned by group)
  - JSON-lines training reports (one object per outer iteration)
  - JSON summaries stamped with generated_at

Percentages are printed with two decimals; a metric that is undefined
(no positive test sample) prints as "-".
"""

import csv
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from .evaluation import AccuracyTable, ComparisonTable
from .file_utils import PathLike, write_text
from .model import TrainReport


def _pct(value: float) -> str:
    return "-" if value is None or math.isnan(value) else f"{100.0 * value:.2f}"


def format_accuracy_table(table: AccuracyTable, with_map: bool = False, metric: str = "acc") -> str:
    """
    Group rows then a Total row:

        Group | #Attributes | Accuracy
        Colors | 9 | 82.28
        Total | 23 | 84.10

    metric="map" prints mean AP in the score column; with_map adds it as a fourth column.
    """
    label = "mAP" if metric == "map" else "Accuracy"
    header = ["Group", "#Attributes", label] + (["mAP"] if with_map and metric != "map" else [])
    lines = [" | ".join(header)]
    for row in table.groups:
        score = row.mean_ap if metric == "map" else row.accuracy
        cells = [row.name, str(row.n_attributes), _pct(score)]
        if with_map and metric != "map":
            cells.append(_pct(row.mean_ap))
        lines.append(" | ".join(cells))
    total = table.total_map if metric == "map" else table.total
    cells = ["Total", str(len(table.names)), _pct(total)]
    if with_map and metric != "map":
        cells.append(_pct(table.total_map))
    lines.append(" | ".join(cells))
    return "\n".join(lines)


def accuracy_table_csv(table: AccuracyTable) -> str:
    """Every attribute, group and the total as CSV rows tagged by a `kind` column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "name", "n_attributes", "accuracy", "mean_ap"])
    for i, name in enumerate(table.names):
        writer.writerow(["attribute", name, 1, f"{table.per_attribute[i]:.6f}", f"{table.average_precision[i]:.6f}"])
    for row in table.groups:
        writer.writerow(["group", row.name, row.n_attributes, f"{row.accuracy:.6f}", f"{row.mean_ap:.6f}"])
    writer.writerow(["total", "Total", len(table.names), f"{table.total:.6f}", f"{table.total_map:.6f}"])
    return buf.getvalue()


def format_comparison_table(comparison: ComparisonTable) -> str:
    lines = [" | ".join(["Method", *comparison.group_names, "Total"])]
    for method, group_scores, total in comparison.rows:
        lines.append(" | ".join([method, *(_pct(v) for v in group_scores), _pct(total)]))
    return "\n".join(lines)


def format_cv_table(result) -> str:
    """One row per grid point: parameters, per-fold held-out accuracy, mean; best marked with '*'."""
    lines = [" | ".join([*result.param_names, "folds", "mean"])]
    for score in result.scores:
        marker = " *" if score.params == result.best else ""
        folds = " ".join(_pct(v) for v in score.fold_scores)
        lines.append(" | ".join([*(f"{p:g}" for p in score.params), folds, _pct(score.mean)]) + marker)
    return "\n".join(lines)


def training_report_lines(report: TrainReport) -> List[str]:
    return [json.dumps(row) for row in report.outer_rows()]


def write_training_report(path: PathLike, report: TrainReport) -> Path:
    """JSON lines, one object per outer iteration."""
    lines = training_report_lines(report)
    return write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def write_json_report(path: PathLike, payload: Dict, extra: Optional[Dict] = None) -> Path:
    """
    Saves a summary object stamped with generated_at.

    Args:
        path: destination .json file
        payload: the report body
        extra: optional keys merged at top level (e.g. the resolved run configuration)
    """
    report = {"generated_at": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")}
    report.update(extra or {})
    report.update(payload)
    return write_text(path, json.dumps(report, indent=2))
