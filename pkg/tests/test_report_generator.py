import json

import numpy as np

from src.evaluation import accuracy_table, comparison_table
from src.model import GroupPartition, HalfStep, TrainReport
from src.report_generator import (
    accuracy_table_csv,
    format_accuracy_table,
    format_comparison_table,
    write_json_report,
    write_training_report,
)


def _table():
    scores = np.array([[1.0, -1.0, 1.0], [-1.0, 1.0, 1.0], [1.0, 1.0, -1.0], [-1.0, -1.0, -1.0]])
    labels = np.array([[1, -1, 1], [-1, 1, 1], [1, -1, -1], [-1, -1, 1]], dtype=float)
    part = GroupPartition((("Colors", (0, 1)), ("Patterns", (2,))))
    return accuracy_table(scores, labels, part, ["black", "white", "striped"])


class TestAccuracyText:
    def test_group_rows_then_total(self):
        lines = format_accuracy_table(_table()).splitlines()
        assert lines[0] == "Group | #Attributes | Accuracy"
        assert lines[1] == "Colors | 2 | 87.50"
        assert lines[2] == "Patterns | 1 | 75.00"
        assert lines[3] == "Total | 3 | 83.33"

    def test_map_column(self):
        lines = format_accuracy_table(_table(), with_map=True).splitlines()
        assert lines[0].endswith("| mAP")
        assert all(len(line.split(" | ")) == 4 for line in lines)

    def test_csv_kinds(self):
        rows = accuracy_table_csv(_table()).splitlines()
        assert rows[0] == "kind,name,n_attributes,accuracy,mean_ap"
        kinds = [r.split(",")[0] for r in rows[1:]]
        assert kinds == ["attribute"] * 3 + ["group"] * 2 + ["total"]


class TestComparisonText:
    def test_columns(self):
        table = _table()
        text = format_comparison_table(comparison_table({"lasso": table, "mtl": table}))
        lines = text.splitlines()
        assert lines[0] == "Method | Colors | Patterns | Total"
        assert lines[2] == "mtl | 87.50 | 75.00 | 83.33"


class TestWriters:
    def test_training_report_json_lines(self, tmp_path):
        report = TrainReport(
            steps=[
                HalfStep(1, "S", 5.0, 4.0, 0.5, 0.3, 0.2, 10, True),
                HalfStep(1, "L", 4.5, 3.6, 0.5, 0.2, 0.2, 7, True),
                HalfStep(2, "S", 4.4, 3.5, 0.5, 0.2, 0.2, 9, True),
                HalfStep(2, "L", 4.3, 3.4, 0.5, 0.2, 0.2, 6, True),
            ]
        )
        path = write_training_report(tmp_path / "r.jsonl", report)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert [r["index"] for r in rows] == [1, 2]
        assert {"objective", "loss", "group_penalty", "l1_penalty", "frobenius_penalty", "s_iters", "l_iters"} <= set(
            rows[0]
        )

    def test_json_report_stamped(self, tmp_path):
        path = write_json_report(tmp_path / "cv.json", {"best": [0.1, 0.01]}, extra={"seed": 42})
        data = json.loads(path.read_text())
        assert data["best"] == [0.1, 0.01]
        assert data["seed"] == 42
        assert data["generated_at"].endswith("Z")
