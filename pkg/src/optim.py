# src/optim.py
"""
Proximal solvers.

fista            - accelerated proximal gradient with backtracking; the monotone
                   variant restarts momentum whenever a step would raise the
                   composite objective, so the recorded sequence never increases.
solve_l_apg      - L-subproblem: loss(L S) + lam ||L||_F^2 smooth, gamma ||L||_1 by prox.
solve_s_spg      - S-subproblem on the smoothed group penalty (plain accelerated descent).
solve_s_exact    - S-subproblem with the closed-form block prox; certified by a
                   block-wise optimality residual.
subgradient_oracle - slow diminishing-step reference solver.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, SolverError
from .linalg_core import spectral_norm_sq_bound
from .loss import sqhinge_value_grad_w
from .model import Dataset, GroupPartition
from .regularizers import GroupPenalty, frobenius_sq, l1_value, prox_l1

logger = logging.getLogger(__name__)

MAX_BACKTRACKS = 60
# smallest step, relative to the initial one, at which a trial point still moves
STEP_FLOOR_RATIO = 1e-14
# a first trial rising less than this, relative to f(y), is rounding and not a bad gradient
STALL_RATIO = 1e-10
CERTIFICATE_TOL = 1e-4

SmoothFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]
ProxFn = Callable[[np.ndarray, float], np.ndarray]
ValueFn = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SolverOpts:
    max_iter: int = 500
    tol: float = 1e-6
    step: Optional[float] = None
    backtrack: float = 0.5
    monotone: bool = True
    window: int = 3
    debug: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise DataError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise DataError(f"tol must be > 0, got {self.tol}")
        if not 0 < self.backtrack < 1:
            raise DataError(f"backtrack factor must lie in (0, 1), got {self.backtrack}")
        if self.step is not None and not self.step > 0:
            raise DataError(f"initial step must be > 0, got {self.step}")


@dataclass
class SolverTrace:
    objectives: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    n_backtracks: int = 0
    final_step: float = 0.0
    restarts: int = 0
    optimality_residual: Optional[float] = None


def _zero(_x: np.ndarray) -> float:
    return 0.0


def _identity_prox(v: np.ndarray, _t: float) -> np.ndarray:
    return v


def _relative_change_small(objectives: List[float], window: int, tol: float) -> bool:
    if len(objectives) <= window:
        return False
    latest = objectives[-1]
    change = abs(objectives[-1 - window] - latest)
    return change <= tol * max(abs(latest), np.finfo(np.float64).tiny)


def fista(
    smooth: SmoothFn,
    prox: Optional[ProxFn],
    x0,
    opts: SolverOpts = SolverOpts(),
    nonsmooth: Optional[ValueFn] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """
    Minimise smooth(x) + nonsmooth(x).

    smooth(x) -> (value, gradient); prox(v, t) -> argmin_x 1/2||x - v||^2 + t * nonsmooth(x).
    The step starts at opts.step (1.0 if unset) and is multiplied by opts.backtrack
    until  f(x+) <= f(y) + <grad f(y), x+ - y> + ||x+ - y||^2 / (2 step).
    """
    prox = prox or _identity_prox
    nonsmooth = nonsmooth or _zero
    x = np.array(x0, dtype=np.float64)
    y = x.copy()
    step = opts.step if opts.step is not None else 1.0
    step_floor = STEP_FLOOR_RATIO * step
    t = 1.0

    fx, _ = smooth(x)
    big_f = fx + nonsmooth(x)
    trace = SolverTrace(objectives=[big_f])

    for it in range(opts.max_iter):
        fy, gy = smooth(y)
        # two ulps of f(y) absorb rounding in the comparison and nothing more
        slack = 2.0 * float(np.spacing(abs(fy)))
        first_rise = None
        for n_back in range(MAX_BACKTRACKS + 1):
            if step < step_floor:
                break
            z = prox(y - step * gy, step)
            diff = z - y
            fz, _ = smooth(z)
            if first_rise is None:
                first_rise = fz - fy
            bound = fy + float(np.vdot(gy, diff)) + float(np.vdot(diff, diff)) / (2.0 * step)
            if fz <= bound + slack:
                break
            step *= opts.backtrack
            trace.n_backtracks += 1
        if step < step_floor or (n_back == MAX_BACKTRACKS and fz > bound + slack):
            if first_rise is not None and first_rise <= STALL_RATIO * abs(fy) + slack:
                logger.debug("fista: no trial point beats f(y)=%.6e beyond rounding at iteration %d", fy, it)
                trace.converged = True
                break
            raise SolverError(
                f"step underflow after {n_back} backtracks (step={step:.3e}); "
                "gradient inconsistent with objective or problem not convex"
            )
        if opts.debug:
            fz_check, _ = smooth(z)
            if fz_check > bound + slack:
                raise SolverError(f"backtracking invariant violated at iteration {it}")

        big_fz = fz + nonsmooth(z)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if not opts.monotone:
            y = z + ((t - 1.0) / t_next) * (z - x)
            x, big_f, t = z, big_fz, t_next
        elif big_fz <= big_f:
            y = z + ((t - 1.0) / t_next) * (z - x)
            x, big_f, t = z, big_fz, t_next
        else:
            # function-value restart: drop momentum, retry from the best point
            y = x.copy()
            t = 1.0
            trace.restarts += 1

        trace.objectives.append(big_f)
        trace.n_iter = it + 1
        if _relative_change_small(trace.objectives, opts.window, opts.tol):
            trace.converged = True
            break

    trace.final_step = step
    return x, trace


def task_spectral_bounds(dataset: Dataset) -> List[float]:
    """Per-task upper bounds on ||X_m||_2^2."""
    return [spectral_norm_sq_bound(task.x) if task.n else 0.0 for task in dataset.tasks]


def with_initial_step(lipschitz: float, opts: SolverOpts) -> SolverOpts:
    if opts.step is not None:
        return opts
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    return replace(opts, step=step)


def _check_factor(a, rows: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != rows:
        raise DataError(f"{name} has shape {a.shape}, expected {rows} rows")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} has non-finite entries")
    return a


def solve_l_apg(
    s_fixed,
    dataset: Dataset,
    gamma: float,
    lam: float,
    opts: SolverOpts = SolverOpts(),
    l0=None,
    x_bounds: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """Minimise loss(L S) + gamma ||L||_1 + lam ||L||_F^2 over L (D x K)."""
    s = np.asarray(s_fixed, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise DataError("S has non-finite entries")
    k = s.shape[0]
    l_start = np.zeros((dataset.d, k)) if l0 is None else _check_factor(l0, dataset.d, "L")

    if (gamma > 0 or lam > 0) and not any(np.any(task.x) for task in dataset.tasks):
        # loss is constant; the penalties alone are minimised at L = 0
        return np.zeros((dataset.d, k)), SolverTrace(converged=True)

    bounds = list(x_bounds) if x_bounds is not None else task_spectral_bounds(dataset)
    col_sq = np.sum(s * s, axis=0)
    lipschitz = math.fsum(b * c for b, c in zip(bounds, col_sq)) + 2.0 * lam
    opts = with_initial_step(lipschitz, opts)

    def smooth(l):
        value, g = sqhinge_value_grad_w(l @ s, dataset)
        return value + lam * frobenius_sq(l), g @ s.T + 2.0 * lam * l

    def prox(v, step):
        return prox_l1(v, step * gamma)

    def nonsmooth(l):
        return gamma * l1_value(l)

    return fista(smooth, prox, l_start, opts, nonsmooth)


def _s_lipschitz(l: np.ndarray, dataset: Dataset) -> float:
    return max((spectral_norm_sq_bound(task.x @ l) if task.n else 0.0) for task in dataset.tasks)


def solve_s_spg(
    l_fixed,
    dataset: Dataset,
    partition: GroupPartition,
    mu: float,
    nu: float,
    opts: SolverOpts = SolverOpts(),
    s0=None,
    penalty: Optional[GroupPenalty] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """Minimise loss(L S) + mu * Omega_nu(S) by accelerated gradient on the smoothed penalty."""
    if not nu > 0:
        raise DataError(f"smoothing scale must be > 0, got {nu}")
    l = _check_factor(l_fixed, dataset.d, "L")
    k = l.shape[1]
    penalty = penalty or GroupPenalty(partition)
    s_start = np.zeros((k, dataset.m)) if s0 is None else _check_factor(s0, k, "S")

    lipschitz = _s_lipschitz(l, dataset) + (mu * penalty.gradient_lipschitz(nu) if mu > 0 else 0.0)
    opts = with_initial_step(lipschitz, opts)

    def smooth(s):
        value, g = sqhinge_value_grad_w(l @ s, dataset)
        grad = l.T @ g
        if mu > 0:
            sm = penalty.smooth(s, nu)
            value += mu * sm.value
            grad = grad + mu * sm.gradient
        return value, grad

    return fista(smooth, None, s_start, opts)


def group_optimality_residual(
    grad,
    s,
    partition: GroupPartition,
    mu: float,
    size_weighted: bool = False,
) -> float:
    """
    Largest violation of the block optimality conditions of loss + mu * Omega:
    nonzero block b: grad_b + mu*w*b/||b|| = 0;  zero block: ||grad_b|| <= mu*w.
    """
    grad = np.asarray(grad, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    weights = partition.block_weights(size_weighted)
    worst = 0.0
    for g in range(partition.n_groups):
        idx = partition.members(g)
        gb = grad[:, idx]
        sb = s[:, idx]
        norms = np.linalg.norm(sb, axis=1)
        nz = norms > 0
        if np.any(nz):
            res = gb[nz] + mu * weights[g] * sb[nz] / norms[nz][:, None]
            worst = max(worst, float(np.max(np.linalg.norm(res, axis=1))))
        if np.any(~nz):
            excess = np.linalg.norm(gb[~nz], axis=1) - mu * weights[g]
            worst = max(worst, float(np.max(excess)), 0.0)
    return worst


def solve_s_exact(
    l_fixed,
    dataset: Dataset,
    partition: GroupPartition,
    mu: float,
    opts: SolverOpts = SolverOpts(),
    s0=None,
    penalty: Optional[GroupPenalty] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """Minimise loss(L S) + mu * Omega(S) with the exact block soft-threshold prox."""
    l = _check_factor(l_fixed, dataset.d, "L")
    k = l.shape[1]
    penalty = penalty or GroupPenalty(partition)
    s_start = np.zeros((k, dataset.m)) if s0 is None else _check_factor(s0, k, "S")
    opts = with_initial_step(_s_lipschitz(l, dataset), opts)

    def smooth(s):
        value, g = sqhinge_value_grad_w(l @ s, dataset)
        return value, l.T @ g

    def prox(v, step):
        return penalty.prox(v, step * mu)

    def nonsmooth(s):
        return mu * penalty.value(s)

    s, trace = fista(smooth, prox, s_start, opts, nonsmooth)
    _, g = smooth(s)
    trace.optimality_residual = group_optimality_residual(g, s, partition, mu, penalty.size_weighted)
    if trace.optimality_residual > CERTIFICATE_TOL:
        logger.warning(
            "exact S solver stopped with optimality residual %.3e (> %.0e) after %d iterations",
            trace.optimality_residual,
            CERTIFICATE_TOL,
            trace.n_iter,
        )
    return s, trace


def subgradient_oracle(
    objective: ValueFn,
    subgrad: Callable[[np.ndarray], np.ndarray],
    x0,
    iters: int,
    step_scale: float = 1.0,
    schedule: Optional[Callable[[int], float]] = None,
) -> np.ndarray:
    """Diminishing-step subgradient descent (step c/sqrt(t+1) by default); returns the best iterate."""
    x = np.array(x0, dtype=np.float64)
    best_x = x.copy()
    best_f = objective(x)
    for it in range(iters):
        step = schedule(it) if schedule is not None else step_scale / math.sqrt(it + 1.0)
        x = x - step * subgrad(x)
        f = objective(x)
        if f < best_f:
            best_f = f
            best_x = x.copy()
    return best_x
