# src/trainer.py
"""
Alternating optimisation of

    F(L, S) = sum_m loss_m(L s_m) + mu * Omega(S) + gamma ||L||_1 + lam ||L||_F^2

Each outer iteration runs an S-step (smoothed solver by default, exact-prox
solver on request) then an L-step (accelerated proximal gradient), both warm
started from the current factors. Training stops when the relative change of
the true F between outer iterations drops below outer_tol.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import train_ridge, train_single_lasso
from .errors import DataError, SolverError, TrainingError
from .evaluation import task_accuracies
from .linalg_core import svd_thin
from .loss import sqhinge_total
from .model import (
    Dataset,
    GroupPartition,
    HalfStep,
    Hyperparams,
    LatentModel,
    TrainReport,
    ensure_valid,
    stratified_folds,
    task_seed,
)
from .optim import SolverOpts, solve_l_apg, solve_s_exact, solve_s_spg, task_spectral_bounds
from .regularizers import GroupPenalty, block_support, frobenius_sq, l1_value

logger = logging.getLogger(__name__)

INIT_SCALE = 1e-2
DESCENT_EPS = 1e-9


@dataclass(frozen=True)
class ObjectiveTerms:
    loss: float
    group: float
    l1: float
    frobenius: float

    @property
    def total(self) -> float:
        return self.loss + self.group + self.l1 + self.frobenius


def _penalty(partition: GroupPartition, hp: Hyperparams) -> GroupPenalty:
    return GroupPenalty(partition, squared=hp.squared_group_norm, size_weighted=hp.group_size_weighting)


def objective_terms(model: LatentModel, dataset: Dataset, partition: GroupPartition, hp: Hyperparams) -> ObjectiveTerms:
    """Full objective, each term already multiplied by its weight."""
    return ObjectiveTerms(
        loss=sqhinge_total(model, dataset),
        group=hp.mu * _penalty(partition, hp).value(model.s) if hp.mu > 0 else 0.0,
        l1=hp.gamma * l1_value(model.l),
        frobenius=hp.lam * frobenius_sq(model.l),
    )


def init_model(dataset: Dataset, hp: Hyperparams, diagnostic: bool = False) -> LatentModel:
    """
    L0 from the SVD of a ridge warm start W0: first K left singular vectors scaled
    by sqrt(sigma), columns beyond rank(W0) seeded Gaussian (scale 1e-2).
    S0 is seeded Gaussian (scale 1e-2) with one sub-seed per task name; in
    diagnostic mode S0 = sqrt(sigma) V^T so that L0 @ S0 reproduces W0.
    """
    d, m = dataset.d, dataset.m
    k = hp.resolve_k(d, m)
    w0 = train_ridge(dataset, hp.ridge_lambda)

    # canonical column order keeps the factorisation independent of task order
    order = np.argsort(np.asarray(dataset.names), kind="stable")
    u, sigma, v = svd_thin(w0[:, order])
    floor = sigma[0] * max(d, m) * np.finfo(np.float64).eps if sigma.size else 0.0
    rank = int(np.sum(sigma > floor)) if sigma.size and sigma[0] > 0 else 0
    r = min(k, rank)

    rng = np.random.default_rng(hp.seed)
    l0 = np.empty((d, k))
    root = np.sqrt(sigma[:r])
    l0[:, :r] = u[:, :r] * root
    l0[:, r:] = INIT_SCALE * rng.standard_normal((d, k - r))

    s0 = np.zeros((k, m))
    if diagnostic:
        s0[:r, order] = root[:, None] * v[:, :r].T
    else:
        for j, name in enumerate(dataset.names):
            s0[:, j] = INIT_SCALE * np.random.default_rng(task_seed(hp.seed, name)).standard_normal(k)
    logger.debug("init: K=%d, rank(W0)=%d, padded %d latent columns", k, rank, k - r)
    return LatentModel(l0, s0, tuple(dataset.names))


def default_nu(hp: Hyperparams, penalty: GroupPenalty, k: int, objective: float) -> float:
    """Smoothing scale whose worst-case objective gap is inner_tol/2 relative to `objective`."""
    if hp.nu is not None:
        return hp.nu
    if hp.mu <= 0:
        return 1.0
    unit_gap = penalty.gap_bound(k, 1.0)
    return hp.inner_tol * max(objective, 1.0) / (2.0 * hp.mu * unit_gap)


def _nu_at(hp: Hyperparams, nu: float, outer: int) -> float:
    if hp.nu_schedule == "geometric":
        return max(nu * hp.nu_decay ** (outer - 1), nu * hp.nu_min_ratio)
    return nu


def _half_step(outer: int, step: str, terms: ObjectiveTerms, trace, slack: float = 0.0) -> HalfStep:
    return HalfStep(
        outer=outer,
        step=step,
        objective=terms.total,
        loss=terms.loss,
        group=terms.group,
        l1=terms.l1,
        frobenius=terms.frobenius,
        inner_iters=trace.n_iter,
        inner_converged=trace.converged,
        slack=slack,
    )


def train(
    dataset: Dataset,
    partition: GroupPartition,
    hp: Hyperparams,
    callback: Optional[Callable[[HalfStep], None]] = None,
) -> Tuple[LatentModel, TrainReport]:
    """Alternate S-steps and L-steps from init_model until the objective settles."""
    ensure_valid(dataset, partition)
    started = time.perf_counter()
    penalty = _penalty(partition, hp)
    model = init_model(dataset, hp)
    k = model.k

    terms = objective_terms(model, dataset, partition, hp)
    nu = default_nu(hp, penalty, k, terms.total)
    report = TrainReport(nu=nu, initial_objective=terms.total)
    inner = SolverOpts(max_iter=hp.inner_max, tol=hp.inner_tol)
    x_bounds = task_spectral_bounds(dataset)
    logger.info(
        "training M=%d D=%d K=%d G=%d mu=%g gamma=%g lambda=%g nu=%.3e solver=%s, initial objective %.6f",
        dataset.m, dataset.d, k, partition.n_groups, hp.mu, hp.gamma, hp.lam, nu, hp.s_solver, terms.total,
    )

    previous = terms.total
    for outer in range(1, hp.outer_max + 1):
        nu_t = _nu_at(hp, nu, outer)
        before = terms.total
        try:
            if hp.s_solver == "exact":
                s, trace = solve_s_exact(model.l, dataset, partition, hp.mu, inner, s0=model.s, penalty=penalty)
            else:
                s, trace = solve_s_spg(model.l, dataset, partition, hp.mu, nu_t, inner, s0=model.s, penalty=penalty)
        except SolverError as e:
            report.wall_time = time.perf_counter() - started
            raise TrainingError(f"S-step failed at outer iteration {outer}: {e}", report, model) from e
        model = model.with_factors(s=s)
        terms = objective_terms(model, dataset, partition, hp)
        slack = 0.0
        if hp.s_solver == "spg" and hp.mu > 0:
            slack = hp.mu * (penalty.value(s) - penalty.smooth(s, nu_t).value)
        step = _half_step(outer, "S", terms, trace, slack)
        report.steps.append(step)
        if callback:
            callback(step)
        if terms.total > before + slack + DESCENT_EPS:
            logger.warning("S-step raised the objective by %.3e (slack %.3e)", terms.total - before, slack)

        before = terms.total
        try:
            l, trace = solve_l_apg(model.s, dataset, hp.gamma, hp.lam, inner, l0=model.l, x_bounds=x_bounds)
        except SolverError as e:
            report.wall_time = time.perf_counter() - started
            raise TrainingError(f"L-step failed at outer iteration {outer}: {e}", report, model) from e
        model = model.with_factors(l=l)
        terms = objective_terms(model, dataset, partition, hp)
        step = _half_step(outer, "L", terms, trace)
        report.steps.append(step)
        if callback:
            callback(step)
        if terms.total > before:
            logger.warning("L-step raised the objective by %.3e", terms.total - before)

        report.n_outer = outer
        change = abs(previous - terms.total) / max(abs(terms.total), np.finfo(np.float64).tiny)
        logger.info(
            "outer %d: objective %.6f (loss %.6f, group %.6f, l1 %.6f, frob %.6f) rel.change %.2e",
            outer, terms.total, terms.loss, terms.group, terms.l1, terms.frobenius, change,
        )
        previous = terms.total
        if change < hp.outer_tol:
            report.converged = True
            break

    report.wall_time = time.perf_counter() - started
    if not report.converged:
        logger.warning("stopped at outer_max=%d without reaching outer_tol=%g", hp.outer_max, hp.outer_tol)
    return model, report


@dataclass(frozen=True)
class CVScore:
    params: Tuple[float, ...]
    fold_scores: Tuple[float, ...]
    mean: float


@dataclass(frozen=True)
class CVResult:
    param_names: Tuple[str, ...]
    best: Tuple[float, ...]
    scores: Tuple[CVScore, ...]

    def best_value(self, name: str) -> float:
        return self.best[self.param_names.index(name)]


def _fold_split(dataset: Dataset, assignments: List[np.ndarray], fold: int) -> Tuple[Dataset, Dataset]:
    train_rows = [np.flatnonzero(a != fold) for a in assignments]
    test_rows = [np.flatnonzero(a == fold) for a in assignments]
    return dataset.subset(train_rows), dataset.subset(test_rows)


def _grid_search(
    dataset: Dataset,
    param_names: Tuple[str, ...],
    candidates: Sequence[Tuple[float, ...]],
    fit: Callable[[Dataset, Tuple[float, ...]], np.ndarray],
    folds: int,
    seed: int,
    threads: int,
) -> CVResult:
    if not candidates:
        raise DataError("hyperparameter grid is empty")
    assignments, unstratified = stratified_folds(dataset, folds, seed)
    for name in unstratified:
        logger.warning("task '%s' has fewer than %d positives or negatives; split without stratification", name, folds)
    splits = [_fold_split(dataset, assignments, f) for f in range(folds)]

    def run(job: Tuple[int, int]) -> float:
        c, f = job
        train_ds, test_ds = splits[f]
        w = fit(train_ds, candidates[c])
        accs = task_accuracies(w, test_ds)
        return float(np.nanmean(accs)) if np.any(~np.isnan(accs)) else float("nan")

    jobs = [(c, f) for c in range(len(candidates)) for f in range(folds)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    scores = []
    for c, params in enumerate(candidates):
        fold_scores = tuple(results[c * folds:(c + 1) * folds])
        mean = float(np.nanmean(fold_scores)) if np.any(~np.isnan(fold_scores)) else float("-inf")
        scores.append(CVScore(params=tuple(float(p) for p in params), fold_scores=fold_scores, mean=mean))
        logger.info("cv %s: mean held-out accuracy %.4f", dict(zip(param_names, params)), mean)
    # ties go to the larger (sparser) parameters
    best = max(scores, key=lambda sc: (sc.mean,) + sc.params)
    return CVResult(param_names=param_names, best=best.params, scores=tuple(scores))


def cross_validate(
    dataset: Dataset,
    partition: GroupPartition,
    mu_grid: Sequence[float],
    gamma_grid: Sequence[float],
    folds: int,
    hp: Hyperparams,
    seed: int,
    threads: int = 1,
) -> CVResult:
    """Select (mu, gamma) by mean held-out total accuracy over per-task stratified folds."""
    ensure_valid(dataset, partition)
    candidates = [(float(mu), float(gamma)) for mu in mu_grid for gamma in gamma_grid]

    def fit(train_ds: Dataset, params: Tuple[float, ...]) -> np.ndarray:
        model, _ = train(train_ds, partition, replace(hp, mu=params[0], gamma=params[1]))
        return model.l @ model.s

    return _grid_search(dataset, ("mu", "gamma"), candidates, fit, folds, seed, threads)


def cross_validate_lasso(
    dataset: Dataset,
    gamma_grid: Sequence[float],
    folds: int,
    opts: SolverOpts,
    seed: int,
    threads: int = 1,
) -> CVResult:
    """Select gamma for the single-task lasso baseline on the same folds."""
    candidates = [(float(gamma),) for gamma in gamma_grid]

    def fit(train_ds: Dataset, params: Tuple[float, ...]) -> np.ndarray:
        return train_single_lasso(train_ds, params[0], opts)

    return _grid_search(dataset, ("gamma",), candidates, fit, folds, seed, threads)


def describe_support(model: LatentModel, partition: GroupPartition) -> Dict[str, List[int]]:
    """Latent rows with a nonzero block, per group."""
    support = block_support(model.s, partition)
    return {name: [int(k) for k in np.flatnonzero(support[:, g])] for g, name in enumerate(partition.names)}
