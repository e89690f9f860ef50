# src/loss.py
"""
Squared hinge data term: sum_m sum_i 1/2 * max(0, 1 - y_i * w_m . x_i)^2.

Every gradient goes through the per-task w-gradient
    g_m = -X_m^T (xi * y),   xi = max(0, 1 - y * X_m w_m),
so grad_S = L^T G and grad_L = G S^T with G = [g_1 ... g_M].
Per-task values are summed with math.fsum, so totals do not depend on task order.
"""

import math
from typing import Tuple

import numpy as np

from .errors import DataError
from .model import Dataset, LatentModel, TaskData


def _check_w(w: np.ndarray, task: TaskData) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != task.d:
        raise DataError(f"task '{task.name}': weight dimension {w.shape[0]} != feature dimension {task.d}")
    return w


def _slack(w: np.ndarray, task: TaskData) -> np.ndarray:
    return np.maximum(0.0, 1.0 - task.y * (task.x @ w))


def sqhinge_task_value(w, task: TaskData) -> float:
    w = _check_w(w, task)
    if task.n == 0:
        return 0.0
    xi = _slack(w, task)
    return 0.5 * float(xi @ xi)


def sqhinge_task_value_grad(w, task: TaskData) -> Tuple[float, np.ndarray]:
    """Value and D-vector gradient of one task's loss at w."""
    w = _check_w(w, task)
    if task.n == 0:
        return 0.0, np.zeros_like(w)
    xi = _slack(w, task)
    return 0.5 * float(xi @ xi), -(task.x.T @ (xi * task.y))


def _check_w_matrix(w: np.ndarray, dataset: Dataset) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape != (dataset.d, dataset.m):
        raise DataError(f"weight matrix shape {w.shape} != (D={dataset.d}, M={dataset.m})")
    return w


def sqhinge_value_w(w, dataset: Dataset) -> float:
    w = _check_w_matrix(w, dataset)
    return math.fsum(sqhinge_task_value(w[:, m], task) for m, task in enumerate(dataset.tasks))


def sqhinge_value_grad_w(w, dataset: Dataset) -> Tuple[float, np.ndarray]:
    """Total loss and its D x M gradient with respect to W."""
    w = _check_w_matrix(w, dataset)
    grad = np.zeros_like(w)
    values = []
    for m, task in enumerate(dataset.tasks):
        value, g = sqhinge_task_value_grad(w[:, m], task)
        values.append(value)
        grad[:, m] = g
    return math.fsum(values), grad


def _check_model(model: LatentModel, dataset: Dataset) -> None:
    if model.d != dataset.d or model.m != dataset.m:
        raise DataError(f"model is {model.d}x{model.m} (D x M), dataset is {dataset.d}x{dataset.m}")


def sqhinge_total(model: LatentModel, dataset: Dataset) -> float:
    _check_model(model, dataset)
    return sqhinge_value_w(model.l @ model.s, dataset)


def sqhinge_grad_s(model: LatentModel, dataset: Dataset) -> np.ndarray:
    _check_model(model, dataset)
    _, g = sqhinge_value_grad_w(model.l @ model.s, dataset)
    return model.l.T @ g


def sqhinge_grad_l(model: LatentModel, dataset: Dataset) -> np.ndarray:
    _check_model(model, dataset)
    _, g = sqhinge_value_grad_w(model.l @ model.s, dataset)
    return g @ model.s.T
