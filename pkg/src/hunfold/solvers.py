"""Proximal-gradient baselines for the l1-regularised recovery problem

    minimise  0.5 * ||y - phi x||_2^2  +  lam * sum_i |x_i|

over complex spectra.  Both solvers apply the dictionary matrix-free
(two thin products per step, never the dense Gram), start from zero and
stop on a relative objective-change test or an iteration budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cplx import ComplexArray, NumericError, lipschitz_constant, soft_threshold_planes
from .harmonic import Dictionary

__all__ = [
    "SolverConfig",
    "SolverResult",
    "default_lambda",
    "fista",
    "ista",
    "objective",
]

# Power iteration returns a (certified) lower bound on the top eigenvalue;
# a hair of inflation keeps the descent step non-expansive.
_L_SAFETY = 1.0 + 1e-6


@dataclass
class SolverConfig:
    """Solver knobs: penalty weight, budget, stopping tolerance."""

    lam: float
    max_iter: int = 1000
    tol: float = 1e-10
    record_trace: bool = False
    lipschitz: float | None = None

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError(f"penalty weight must be >= 0, got {self.lam}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0.0:
            raise ValueError("tol must be >= 0")


@dataclass
class SolverResult:
    x_hat: ComplexArray
    iterations_run: int
    converged: bool
    lipschitz: float
    objective_trace: list[float] | None = field(default=None)


def objective(d: Dictionary, x: ComplexArray, y: ComplexArray, lam: float) -> float:
    """0.5 * ||y - phi x||^2 + lam * sum of complex moduli."""
    if x.shape != (d.total,) or y.shape != (d.n_obs,):
        raise ValueError(f"shapes {x.shape}/{y.shape} do not fit dictionary "
                         f"({d.n_obs} x {d.total})")
    pr, pi = d.phi.re, d.phi.im
    rr = y.re - (pr @ x.re - pi @ x.im)
    ri = y.im - (pr @ x.im + pi @ x.re)
    return float(0.5 * (rr @ rr + ri @ ri) + lam * np.sum(np.hypot(x.re, x.im)))


def default_lambda(d: Dictionary, y: ComplexArray, scale: float = 0.1) -> float:
    """Scale-free penalty heuristic: scale * max |(phi^H y)_i|.

    Any scale below 1 keeps the all-zero solution excluded.
    """
    pr, pi = d.phi.re, d.phi.im
    gr = pr.T @ y.re + pi.T @ y.im
    gi = pr.T @ y.im - pi.T @ y.re
    return float(scale * np.max(np.hypot(gr, gi)))


def _step_scale(d: Dictionary, cfg: SolverConfig) -> float:
    if cfg.lipschitz is not None:
        return float(cfg.lipschitz)
    return lipschitz_constant(d.phi).value * _L_SAFETY


def _objective_planes(pr, pi, yr, yi, xr, xi, lam):
    rr = yr - (pr @ xr - pi @ xi)
    ri = yi - (pr @ xi + pi @ xr)
    return 0.5 * (rr @ rr + ri @ ri) + lam * np.sum(np.hypot(xr, xi))


def ista(d: Dictionary, y: ComplexArray, cfg: SolverConfig) -> SolverResult:
    """Iterative shrinkage-thresholding from a zero start.

    Each step moves along phi^H(y - phi x) scaled by 1/L and applies the
    complex soft threshold at lam/L; the objective never increases.
    """
    if y.shape != (d.n_obs,):
        raise ValueError(f"observation shape {y.shape}, expected ({d.n_obs},)")
    pr, pi = d.phi.re, d.phi.im
    yr, yi = y.re, y.im
    big_l = _step_scale(d, cfg)
    thr = cfg.lam / big_l
    xr = np.zeros(d.total)
    xi = np.zeros(d.total)
    obj = _objective_planes(pr, pi, yr, yi, xr, xi, cfg.lam)
    trace = [obj] if cfg.record_trace else None
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        rr = yr - (pr @ xr - pi @ xi)
        ri = yi - (pr @ xi + pi @ xr)
        gr = pr.T @ rr + pi.T @ ri
        gi = pr.T @ ri - pi.T @ rr
        xr, xi = soft_threshold_planes(xr + gr / big_l, xi + gi / big_l, thr)
        new_obj = _objective_planes(pr, pi, yr, yi, xr, xi, cfg.lam)
        if not np.isfinite(new_obj):
            raise NumericError(f"non-finite objective at iteration {it}")
        if trace is not None:
            trace.append(new_obj)
        if abs(new_obj - obj) <= cfg.tol * max(obj, np.finfo(float).tiny):
            obj = new_obj
            converged = True
            break
        obj = new_obj
    return SolverResult(ComplexArray(xr, xi), it, converged, big_l, trace)


def fista(d: Dictionary, y: ComplexArray, cfg: SolverConfig) -> SolverResult:
    """Momentum-accelerated variant sharing the fixed points of :func:`ista`.

    Classical momentum sequence t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2 with
    extrapolation weight (t_k - 1) / t_{k+1}; no restarts.
    """
    if y.shape != (d.n_obs,):
        raise ValueError(f"observation shape {y.shape}, expected ({d.n_obs},)")
    pr, pi = d.phi.re, d.phi.im
    yr, yi = y.re, y.im
    big_l = _step_scale(d, cfg)
    thr = cfg.lam / big_l
    xr = np.zeros(d.total)
    xi = np.zeros(d.total)
    zr, zi = xr.copy(), xi.copy()
    t_mom = 1.0
    obj = _objective_planes(pr, pi, yr, yi, xr, xi, cfg.lam)
    trace = [obj] if cfg.record_trace else None
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        rr = yr - (pr @ zr - pi @ zi)
        ri = yi - (pr @ zi + pi @ zr)
        gr = pr.T @ rr + pi.T @ ri
        gi = pr.T @ ri - pi.T @ rr
        nxr, nxi = soft_threshold_planes(zr + gr / big_l, zi + gi / big_l, thr)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom)) / 2.0
        w = (t_mom - 1.0) / t_next
        zr = nxr + w * (nxr - xr)
        zi = nxi + w * (nxi - xi)
        xr, xi = nxr, nxi
        t_mom = t_next
        new_obj = _objective_planes(pr, pi, yr, yi, xr, xi, cfg.lam)
        if not np.isfinite(new_obj):
            raise NumericError(f"non-finite objective at iteration {it}")
        if trace is not None:
            trace.append(new_obj)
        if abs(new_obj - obj) <= cfg.tol * max(obj, np.finfo(float).tiny):
            obj = new_obj
            converged = True
            break
        obj = new_obj
    return SolverResult(ComplexArray(xr, xi), it, converged, big_l, trace)
