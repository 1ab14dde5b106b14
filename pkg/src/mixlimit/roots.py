"""Vectorized safeguarded Newton iteration for monotone scalar equations."""
from __future__ import annotations

import numpy as np

FTOL = 1e-12
MAXITER = 100


class SolverError(RuntimeError):
    """Root finder failed; carries the worst residual for reporting."""

    def __init__(self, msg, residual=None, where=None):
        super().__init__(msg)
        self.residual = residual
        self.where = where


def expand_bracket(fun, x0, step=1.0, lower=-np.inf, upper=np.inf, maxexpand=80):
    """Find [lo, hi] around x0 with fun(lo) > 0 > fun(hi) for a decreasing fun.

    ``fun`` returns only values here. Bounds ``lower``/``upper`` are open
    limits of the domain; steps toward them are halved geometrically.
    """
    x0 = np.asarray(x0, dtype=float)
    lo = x0.copy()
    hi = x0.copy()
    flo = fun(lo)
    fhi = flo.copy()
    w = np.full_like(x0, step)
    for _ in range(maxexpand):
        need_lo = ~(flo > 0)
        need_hi = ~(fhi < 0)
        if not (need_lo.any() or need_hi.any()):
            return lo, hi
        if need_lo.any():
            cand = lo - w
            if np.isfinite(lower).any():
                cand = np.where(cand <= lower, 0.5 * (lo + lower), cand)
            lo = np.where(need_lo, cand, lo)
            flo = np.where(need_lo, fun(lo), flo)
        if need_hi.any():
            cand = hi + w
            if np.isfinite(upper).any():
                cand = np.where(cand >= upper, 0.5 * (hi + upper), cand)
            hi = np.where(need_hi, cand, hi)
            fhi = np.where(need_hi, fun(hi), fhi)
        w = 2.0 * w
    bad = ~((flo > 0) & (fhi < 0))
    raise SolverError("bracket expansion failed", where=np.flatnonzero(bad))


def newton_decreasing(fun, lo, hi, x0=None, ftol=FTOL, maxiter=MAXITER, what="root"):
    """Solve fun(x) = 0 elementwise for decreasing fun on brackets [lo, hi].

    ``fun(x)`` returns ``(F, dF)``. Newton steps leaving the current bracket
    are replaced by bisection. Converged means ``|F| <= ftol`` or the step
    has reached round-off level.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, dtype=float), lo, hi)
    done = np.zeros(x.shape, dtype=bool)
    F = np.full(x.shape, np.inf)
    for _ in range(maxiter):
        F, dF = fun(x)
        done = done | (np.abs(F) <= ftol)
        pos = F > 0
        lo = np.where(pos, x, lo)
        hi = np.where(pos, hi, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - F / dF
        inside = (xn > lo) & (xn < hi) & np.isfinite(xn)
        xn = np.where(inside, xn, 0.5 * (lo + hi))
        tiny = np.abs(xn - x) <= 4e-16 * (1.0 + np.abs(x))
        done = done | tiny | (hi - lo <= 4e-16 * (1.0 + np.abs(x)))
        x = np.where(done, x, xn)
        if done.all():
            return x
    worst = float(np.max(np.abs(np.where(done, 0.0, F))))
    raise SolverError(f"{what}: no convergence after {maxiter} iterations", residual=worst,
                      where=np.flatnonzero(~done))
