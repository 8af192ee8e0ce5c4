"""Recovery-quality metrics: normalised error and support hit rate."""

from __future__ import annotations

import numpy as np

from .cplx import ComplexArray

__all__ = ["hit_rate_metric", "nmse_metric", "top_k_indices"]


def nmse_metric(x_hat: ComplexArray, x_true: ComplexArray) -> float:
    """||x_true - x_hat|| / ||x_true|| for a single trial."""
    if x_hat.shape != x_true.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x_true.shape}")
    ref = x_true.norm()
    if ref == 0.0:
        raise ValueError("ground truth is identically zero")
    return (x_true - x_hat).norm() / ref


def top_k_indices(x: ComplexArray, k: int) -> np.ndarray:
    """Indices of the k largest moduli; ties resolve to the lowest index."""
    mag = x.abs().ravel()
    order = np.argsort(-mag, kind="stable")
    return np.sort(order[:k])


def hit_rate_metric(x_hat: ComplexArray, x_true: ComplexArray, k: int,
                    tol_cells: int = 0, grid_shape=None) -> float:
    """Fraction of true components found among the k largest estimates.

    Strict matching requires the exact grid index.  With ``tol_cells`` > 0
    a true component counts as found when some top-k index lies within that
    many cells (Chebyshev distance over the grid axes; pass ``grid_shape``
    for 2-D problems).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    support = np.flatnonzero(x_true.abs() > 0.0)
    if support.size != k:
        raise ValueError(f"ground truth has {support.size} nonzeros, expected {k}")
    picked = top_k_indices(x_hat, k)
    if tol_cells == 0:
        hits = np.intersect1d(support, picked).size
        return hits / k
    if grid_shape is None:
        grid_shape = x_true.shape
    coords_sup = np.array(np.unravel_index(support, grid_shape)).T
    coords_pick = np.array(np.unravel_index(picked, grid_shape)).T
    hits = 0
    for c in coords_sup:
        dist = np.max(np.abs(coords_pick - c), axis=1)
        if np.any(dist <= tol_cells):
            hits += 1
    return hits / k
