# src/linalg_core.py
"""
Dense numeric kernel.

Matrices are 2-D float64 numpy arrays. `as_matrix` is the only constructor that
other modules use to accept external data; it rejects NaN/Inf.

- svd_thin: one-sided (Hestenes) Jacobi. Columns of a working copy are rotated
  pairwise until mutually orthogonal; their norms are the singular values.
- spectral_norm_sq_bound: power iteration on AᵀA with a small safety factor,
  capped by the squared Frobenius norm (always an upper bound).
"""

import logging
from typing import Tuple

import numpy as np

from .errors import DataError, SolverError

logger = logging.getLogger(__name__)

JACOBI_MAX_SWEEPS = 60
POWER_MAX_ITER = 1000
POWER_TOL = 1e-10
POWER_SAFETY = 1.02


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Return `data` as a C-contiguous float64 2-D array; raise DataError if not finite."""
    try:
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
    except (TypeError, ValueError) as e:
        raise DataError(f"{name}: not numeric ({e})")
    if arr.ndim != 2:
        raise DataError(f"{name}: expected 2-D matrix, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{name}: non-finite entry at ({bad[0]}, {bad[1]})")
    return arr


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    """Make the largest-magnitude entry of each left vector positive (in place)."""
    if u.shape[0] == 0:
        return
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    v *= signs


def _complete_columns(u: np.ndarray, missing: np.ndarray) -> None:
    """Replace columns flagged in `missing` by unit vectors orthogonal to the others."""
    m = u.shape[0]
    for j in np.flatnonzero(missing):
        keep = [c for c in range(u.shape[1]) if c != j and not missing[c]]
        basis = u[:, keep]
        candidates = np.eye(m)
        for _ in range(2):
            candidates = candidates - basis @ (basis.T @ candidates)
        norms = np.linalg.norm(candidates, axis=0)
        best = int(np.argmax(norms))
        u[:, j] = candidates[:, best] / norms[best]
        missing[j] = False


def _jacobi_tall(a: np.ndarray, max_sweeps: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    m, n = a.shape
    work = a.copy()
    v = np.eye(n)
    tol = max(m, n) * np.finfo(np.float64).eps

    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ci = work[:, i]
                cj = work[:, j]
                alpha = ci @ ci
                beta = cj @ cj
                gamma = ci @ cj
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ci - s * cj
                new_j = s * ci + c * cj
                work[:, i] = new_i
                work[:, j] = new_j
                vi = v[:, i].copy()
                vj = v[:, j]
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if not rotated:
            logger.debug("jacobi svd converged after %d sweeps", sweep + 1)
            break
    else:
        raise SolverError(f"svd_thin: Jacobi did not converge in {max_sweeps} sweeps for {m}x{n} input")

    sigma = np.linalg.norm(work, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    work = work[:, order]
    v = v[:, order]

    floor = (sigma[0] if sigma.size else 0.0) * max(m, n) * np.finfo(np.float64).eps
    missing = sigma <= floor
    u = np.zeros_like(work)
    live = ~missing
    u[:, live] = work[:, live] / sigma[live]
    if np.any(missing):
        _complete_columns(u, missing.copy())
    return u, sigma, v


def svd_thin(a, max_sweeps: int = JACOBI_MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Thin SVD: a = u @ diag(sigma) @ v.T with r = min(rows, cols) columns.

    sigma is sorted descending; u and v have orthonormal columns; the sign of
    each pair is fixed so the largest-magnitude entry of every u column is positive.
    """
    a = as_matrix(a, "svd input")
    m, n = a.shape
    if min(m, n) < 1:
        raise DataError(f"svd_thin: empty matrix {m}x{n}")
    if m >= n:
        u, sigma, v = _jacobi_tall(a, max_sweeps)
    else:
        v, sigma, u = _jacobi_tall(a.T.copy(), max_sweeps)
    _fix_signs(u, v)
    return u, sigma, v


def spectral_norm_sq_bound(a, seed: int = 0) -> float:
    """Upper bound on sigma_max(a)^2, within a few percent of the true value."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    fro_sq = float(np.sum(a * a))
    if fro_sq == 0.0:
        return 0.0

    x = np.random.default_rng(seed).standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    rho = 0.0
    for _ in range(POWER_MAX_ITER):
        y = a.T @ (a @ x)
        rho_new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        x = y / ny
        if abs(rho_new - rho) <= POWER_TOL * rho_new:
            rho = rho_new
            break
        rho = rho_new
    return min(POWER_SAFETY * rho, fro_sq)
