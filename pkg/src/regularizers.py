# src/regularizers.py
"""
Penalties of the objective and their proximal / smoothed forms.

A block is the slice S[k, members(g)] of one latent row k restricted to one
group g. The group-L21 penalty sums block Euclidean norms (optionally weighted
by sqrt(|g|)); its Nesterov-smoothed surrogate replaces each weighted norm
w * ||b|| by  max_{||a|| <= w} <a, b> - nu/2 ||a||^2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, SolverError
from .model import GroupPartition


@dataclass(frozen=True)
class SmoothedPenalty:
    value: float
    gradient: np.ndarray
    nu: float


def _check_partition(s: np.ndarray, partition: GroupPartition) -> None:
    m = s.shape[1]
    seen = np.zeros(m, dtype=bool)
    for name, members in partition.groups:
        idx = np.asarray(members, dtype=np.intp)
        if idx.size == 0 or np.any(idx < 0) or np.any(idx >= m) or np.any(seen[idx]):
            raise DataError(f"partition group '{name}' is not valid for M={m}")
        seen[idx] = True
    if not np.all(seen):
        raise DataError(f"partition leaves task {int(np.flatnonzero(~seen)[0])} uncovered")


def block_norms(s, partition: GroupPartition) -> np.ndarray:
    """K x G matrix of block Euclidean norms."""
    s = np.asarray(s, dtype=np.float64)
    _check_partition(s, partition)
    out = np.empty((s.shape[0], partition.n_groups))
    for g in range(partition.n_groups):
        out[:, g] = np.linalg.norm(s[:, partition.members(g)], axis=1)
    return out


def block_support(s, partition: GroupPartition) -> np.ndarray:
    """K x G boolean matrix: which latent rows each group uses (exactly nonzero blocks)."""
    return block_norms(s, partition) > 0.0


def support_pattern(s, partition: GroupPartition) -> str:
    """
    'shared' if some latent row has nonzero blocks in two groups, 'empty' if a
    group has no nonzero block, else 'exclusive'.
    """
    support = block_support(s, partition)
    if np.any(support.sum(axis=1) > 1):
        return "shared"
    if np.any(~support.any(axis=0)):
        return "empty"
    return "exclusive"


def group_l21_value(s, partition: GroupPartition, size_weighted: bool = False) -> float:
    weights = partition.block_weights(size_weighted)
    return float(np.sum(block_norms(s, partition) * weights))


def prox_group_l21(v, t: float, partition: GroupPartition, size_weighted: bool = False) -> np.ndarray:
    """Block soft-threshold: each block b -> b * max(0, 1 - t*w/||b||); blocks with ||b|| <= t*w become 0."""
    if t < 0:
        raise DataError(f"prox threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=np.float64)
    _check_partition(v, partition)
    out = np.zeros_like(v)
    weights = partition.block_weights(size_weighted)
    for g in range(partition.n_groups):
        idx = partition.members(g)
        block = v[:, idx]
        norms = np.linalg.norm(block, axis=1)
        keep = norms > t * weights[g]
        scale = np.zeros_like(norms)
        scale[keep] = 1.0 - t * weights[g] / norms[keep]
        out[:, idx] = block * scale[:, None]
    return out


def smooth_group_l21(s, partition: GroupPartition, nu: float, size_weighted: bool = False) -> SmoothedPenalty:
    """Smoothed group-L21: value, gradient (the optimal dual blocks) and nu."""
    if not nu > 0:
        raise DataError(f"smoothing scale must be > 0, got {nu}")
    s = np.asarray(s, dtype=np.float64)
    _check_partition(s, partition)
    weights = partition.block_weights(size_weighted)
    dual = np.zeros_like(s)
    value = 0.0
    for g in range(partition.n_groups):
        idx = partition.members(g)
        block = s[:, idx]
        norms = np.linalg.norm(block, axis=1)
        radius = weights[g]
        # quadratic regime inside the dual ball, projection onto its boundary outside
        inside = norms <= nu * radius
        a = np.empty_like(block)
        a[inside] = block[inside] / nu
        outside = ~inside
        a[outside] = block[outside] * (radius / norms[outside])[:, None]
        dual[:, idx] = a
        value += float(np.sum(a * block) - 0.5 * nu * np.sum(a * a))
    return SmoothedPenalty(value=value, gradient=dual, nu=nu)


def smoothing_gap_bound(k: int, partition: GroupPartition, nu: float, size_weighted: bool = False) -> float:
    """Upper bound of group_l21_value - smoothed value: nu/2 * K * sum_g w_g^2 (nu*K*G/2 unweighted)."""
    weights = partition.block_weights(size_weighted)
    return 0.5 * nu * k * float(np.sum(weights * weights))


def l1_value(l) -> float:
    return float(np.sum(np.abs(l)))


def prox_l1(v, t: float) -> np.ndarray:
    """Entrywise soft-threshold sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise DataError(f"prox threshold must be >= 0, got {t}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.fmax(np.abs(v) - t, 0.0)


def frobenius_sq(l) -> float:
    l = np.asarray(l, dtype=np.float64)
    return float(np.sum(l * l))


def frobenius_sq_grad(l) -> np.ndarray:
    return 2.0 * np.asarray(l, dtype=np.float64)


class GroupPenalty:
    """
    The S penalty as configured: plain Omega(S) or the squared Omega(S)^2 variant,
    with unit or sqrt(|g|) block weights.
    """

    def __init__(self, partition: GroupPartition, squared: bool = False, size_weighted: bool = False):
        self.partition = partition
        self.squared = squared
        self.size_weighted = size_weighted

    def value(self, s) -> float:
        omega = group_l21_value(s, self.partition, self.size_weighted)
        return omega * omega if self.squared else omega

    def smooth(self, s, nu: float) -> SmoothedPenalty:
        sm = smooth_group_l21(s, self.partition, nu, self.size_weighted)
        if not self.squared:
            return sm
        return SmoothedPenalty(value=sm.value * sm.value, gradient=2.0 * sm.value * sm.gradient, nu=nu)

    def prox(self, v, t: float) -> np.ndarray:
        if self.squared:
            raise SolverError("no closed-form prox for the squared group norm; use the smoothed solver")
        return prox_group_l21(v, t, self.partition, self.size_weighted)

    def gradient_lipschitz(self, nu: float) -> float:
        """Lipschitz constant of the smoothed gradient (plain variant)."""
        return 1.0 / nu

    def gap_bound(self, k: int, nu: float) -> float:
        return smoothing_gap_bound(k, self.partition, nu, self.size_weighted)
