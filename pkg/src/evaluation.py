# src/evaluation.py
"""
Scoring and reporting metrics.

Scores are X @ (L @ S), computed as (X @ L) @ S; the predicted label is
sign(score) with sign(0) = +1. Group accuracy is the unweighted mean of its
members' accuracies and the total is the unweighted mean over all attributes.
Average precision ranks by descending score, ties broken by original index.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError
from .linalg_core import as_matrix
from .model import Dataset, GroupPartition, LatentModel, compose_w

logger = logging.getLogger(__name__)


def predict_scores(model: LatentModel, x) -> np.ndarray:
    """N x M score matrix through the factors: (X @ L) @ S."""
    x = as_matrix(x, "features")
    if x.shape[1] != model.d:
        raise DataError(f"features have D={x.shape[1]}, model expects D={model.d}")
    return (x @ model.l) @ model.s


def predict_labels(scores) -> np.ndarray:
    return np.where(np.asarray(scores) >= 0.0, 1.0, -1.0)


def _weights(model: Union[LatentModel, np.ndarray]) -> np.ndarray:
    return compose_w(model) if isinstance(model, LatentModel) else np.asarray(model, dtype=np.float64)


def average_precision(scores, labels) -> float:
    """AP of one attribute; NaN when there is no positive."""
    scores = np.asarray(scores, dtype=np.float64)
    hits = np.asarray(labels) > 0
    if not np.any(hits):
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    ranked = hits[order]
    ranks = np.arange(1, ranked.size + 1)
    precision = np.cumsum(ranked) / ranks
    return float(np.mean(precision[ranked]))


def mean_average_precision(scores, labels, names: Optional[Sequence[str]] = None) -> Tuple[np.ndarray, float]:
    """Per-attribute AP (NaN for attributes without positives) and their mean."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise DataError(f"scores {scores.shape} and labels {labels.shape} must be matching N x M matrices")
    names = list(names) if names is not None else [str(m) for m in range(scores.shape[1])]
    aps = np.array([average_precision(scores[:, m], labels[:, m]) for m in range(scores.shape[1])])
    return aps, _mean_ap(aps, names)


def _mean_ap(aps: np.ndarray, names: Sequence[str]) -> float:
    for m in np.flatnonzero(np.isnan(aps)):
        logger.warning("attribute '%s' has no positive test sample; excluded from mAP", names[m])
    if np.all(np.isnan(aps)):
        return float("nan")
    return float(np.nanmean(aps))


@dataclass(frozen=True)
class GroupRow:
    name: str
    n_attributes: int
    accuracy: float
    mean_ap: float


@dataclass(frozen=True)
class AccuracyTable:
    names: Tuple[str, ...]
    per_attribute: np.ndarray
    average_precision: np.ndarray
    groups: Tuple[GroupRow, ...]
    total: float
    total_map: float

    def attribute_accuracy(self, name: str) -> float:
        return float(self.per_attribute[self.names.index(name)])


def _build_table(names: Sequence[str], accs: np.ndarray, aps: np.ndarray, partition: GroupPartition) -> AccuracyTable:
    rows = []
    for g, (gname, members) in enumerate(partition.groups):
        idx = partition.members(g)
        if idx.size and np.any(idx >= len(names)):
            raise DataError(f"group '{gname}' refers to attributes beyond M={len(names)}")
        member_aps = aps[idx]
        rows.append(
            GroupRow(
                name=gname,
                n_attributes=len(members),
                accuracy=float(np.mean(accs[idx])),
                mean_ap=float(np.nanmean(member_aps)) if np.any(~np.isnan(member_aps)) else float("nan"),
            )
        )
    return AccuracyTable(
        names=tuple(names),
        per_attribute=accs,
        average_precision=aps,
        groups=tuple(rows),
        total=float(np.mean(accs)),
        total_map=_mean_ap(aps, names),
    )


def accuracy_table(scores, labels, partition: GroupPartition, names: Optional[Sequence[str]] = None) -> AccuracyTable:
    """Per-attribute, per-group and total accuracy (plus AP) for a shared test pool."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise DataError(f"scores {scores.shape} and labels {labels.shape} must be matching N x M matrices")
    if scores.shape[0] == 0:
        raise DataError("empty test set")
    names = list(names) if names is not None else [str(m) for m in range(scores.shape[1])]
    accs = np.mean(predict_labels(scores) == labels, axis=0)
    aps = np.array([average_precision(scores[:, m], labels[:, m]) for m in range(scores.shape[1])])
    return _build_table(names, accs, aps, partition)


def task_accuracies(model: Union[LatentModel, np.ndarray], dataset: Dataset) -> np.ndarray:
    """Accuracy of each task on its own pool; NaN for empty pools."""
    w = _weights(model)
    out = np.full(dataset.m, np.nan)
    for m, task in enumerate(dataset.tasks):
        if task.n:
            out[m] = float(np.mean(predict_labels(task.x @ w[:, m]) == task.y))
    return out


def evaluate_dataset(model: Union[LatentModel, np.ndarray], dataset: Dataset, partition: GroupPartition) -> AccuracyTable:
    """AccuracyTable over per-task test pools (each task scored on its own X_m)."""
    w = _weights(model)
    if w.shape != (dataset.d, dataset.m):
        raise DataError(f"classifier matrix {w.shape} does not match dataset (D={dataset.d}, M={dataset.m})")
    empty = [task.name for task in dataset.tasks if task.n == 0]
    if empty:
        raise DataError(f"empty test set for task(s): {', '.join(empty)}")
    accs = task_accuracies(w, dataset)
    aps = np.array([average_precision(task.x @ w[:, m], task.y) for m, task in enumerate(dataset.tasks)])
    return _build_table(dataset.names, accs, aps, partition)


@dataclass(frozen=True)
class ComparisonTable:
    group_names: Tuple[str, ...]
    rows: Tuple[Tuple[str, Tuple[float, ...], float], ...]


def comparison_table(tables: Dict[str, AccuracyTable], metric: str = "acc") -> ComparisonTable:
    """One row per method: its group scores then the total, columns aligned across methods."""
    if not tables:
        raise DataError("nothing to compare")
    first = next(iter(tables.values()))
    group_names = tuple(row.name for row in first.groups)
    rows: List[Tuple[str, Tuple[float, ...], float]] = []
    for method, table in tables.items():
        if tuple(row.name for row in table.groups) != group_names:
            raise DataError(f"method '{method}' was evaluated with a different grouping")
        if metric == "map":
            rows.append((method, tuple(row.mean_ap for row in table.groups), table.total_map))
        else:
            rows.append((method, tuple(row.accuracy for row in table.groups), table.total))
    return ComparisonTable(group_names=group_names, rows=tuple(rows))
