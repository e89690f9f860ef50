# src/baselines.py
"""
Comparison models sharing the loss and solver kernels:

- train_single_lasso : per task, squared hinge + gamma ||w||_1
- train_l21_all      : all tasks jointly, squared hinge + mu sum_d ||W[d, :]||_2
- train_ridge        : per task, closed-form least squares on the +/-1 targets
"""

import logging
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DataError, SolverError
from .loss import sqhinge_task_value_grad, sqhinge_value_grad_w
from .model import Dataset, GroupPartition
from .optim import SolverOpts, fista, task_spectral_bounds, with_initial_step
from .regularizers import group_l21_value, l1_value, prox_group_l21, prox_l1

logger = logging.getLogger(__name__)

RIDGE_MAX_CONDITION = 1e12
RIDGE_RESIDUAL_TOL = 1e-8


def train_single_lasso(dataset: Dataset, gamma: float, opts: SolverOpts = SolverOpts()) -> np.ndarray:
    """Independent L1-regularised squared hinge classifiers, one column per task."""
    if gamma < 0:
        raise DataError(f"gamma must be >= 0, got {gamma}")
    bounds = task_spectral_bounds(dataset)
    w = np.zeros((dataset.d, dataset.m))
    for m, task in enumerate(dataset.tasks):

        def smooth(col, task=task):
            value, g = sqhinge_task_value_grad(col[:, 0], task)
            return value, g[:, None]

        def prox(v, step):
            return prox_l1(v, step * gamma)

        def nonsmooth(col):
            return gamma * l1_value(col)

        try:
            col, trace = fista(smooth, prox, np.zeros((dataset.d, 1)), with_initial_step(bounds[m], opts), nonsmooth)
        except SolverError as e:
            raise SolverError(f"lasso baseline failed on task '{task.name}': {e}") from e
        logger.debug("lasso task %s: %d iterations, objective %.6g", task.name, trace.n_iter, trace.objectives[-1])
        w[:, m] = col[:, 0]
    return w


def train_l21_all(dataset: Dataset, mu: float, opts: SolverOpts = SolverOpts()) -> np.ndarray:
    """Joint feature selection: one all-task block per feature row of W."""
    if mu < 0:
        raise DataError(f"mu must be >= 0, got {mu}")
    rows = GroupPartition.single(dataset.m)
    lipschitz = max(task_spectral_bounds(dataset), default=0.0)

    def smooth(w):
        return sqhinge_value_grad_w(w, dataset)

    def prox(v, step):
        return prox_group_l21(v, step * mu, rows)

    def nonsmooth(w):
        return mu * group_l21_value(w, rows)

    w, trace = fista(smooth, prox, np.zeros((dataset.d, dataset.m)), with_initial_step(lipschitz, opts), nonsmooth)
    logger.debug("l21 all-sharing: %d iterations, objective %.6g", trace.n_iter, trace.objectives[-1])
    return w


def train_ridge(dataset: Dataset, lambda_r: float, max_condition: Optional[float] = RIDGE_MAX_CONDITION) -> np.ndarray:
    """w_m = (X_m^T X_m + lambda_r I)^-1 X_m^T y_m for every task."""
    if not lambda_r > 0:
        raise DataError(f"ridge lambda must be > 0, got {lambda_r}")
    d = dataset.d
    w = np.zeros((d, dataset.m))
    eye = np.eye(d)
    for m, task in enumerate(dataset.tasks):
        if task.n == 0:
            continue
        gram = task.x.T @ task.x + lambda_r * eye
        rhs = task.x.T @ task.y
        if max_condition is not None:
            cond = np.linalg.cond(gram)
            if not cond <= max_condition:
                raise DataError(f"ridge system for task '{task.name}' is ill-conditioned (cond={cond:.3e})")
        try:
            factor = linalg.cho_factor(gram, lower=True, check_finite=False)
        except linalg.LinAlgError as e:
            raise DataError(f"ridge factorisation failed for task '{task.name}': {e}") from e
        col = linalg.cho_solve(factor, rhs, check_finite=False)
        residual = np.linalg.norm(gram @ col - rhs)
        scale = np.linalg.norm(gram, 2) * np.linalg.norm(col) + np.linalg.norm(rhs)
        if residual > RIDGE_RESIDUAL_TOL * max(scale, np.finfo(np.float64).tiny):
            raise DataError(f"ridge solve for task '{task.name}' left residual {residual:.3e}")
        w[:, m] = col
    return w
