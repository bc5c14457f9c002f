"""Levenberg-Marquardt least squares with Marquardt diagonal scaling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ResidualJacobian = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e16


@dataclass
class LMResult:
    x: np.ndarray
    sse: float
    iterations: int
    converged: bool


def levenberg_marquardt(
    fun: ResidualJacobian,
    x0,
    max_iter: int = 2000,
    rtol: float = 1e-10,
    lam0: float = 1e-3,
) -> LMResult:
    """Minimize ``sum(r(x)**2)`` where ``fun(x)`` returns ``(r, J)``.

    Stops when an accepted step lowers the SSE by a relative amount below
    ``rtol`` (converged), when no damping level yields descent (converged to
    working precision), or after ``max_iter`` iterations (not converged).
    """
    x = np.array(x0, dtype=float)
    with np.errstate(all="ignore"):
        r, J = fun(x)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
        return LMResult(x, float("inf"), 0, False)
    sse = float(r @ r)
    lam = lam0
    it = 0
    while it < max_iter:
        it += 1
        if sse == 0.0:
            return LMResult(x, sse, it, True)
        g = J.T @ r
        H = J.T @ J
        diag = np.diag(H).copy()
        floor = 1e-12 * max(float(diag.max()), np.finfo(float).tiny)
        diag = np.maximum(diag, floor)
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            with np.errstate(all="ignore"):
                r_new, J_new = fun(x_new)
            if np.all(np.isfinite(r_new)) and np.all(np.isfinite(J_new)):
                sse_new = float(r_new @ r_new)
                if sse_new < sse:
                    accepted = True
                    break
            lam *= 10.0
        if not accepted:
            return LMResult(x, sse, it, True)
        rel = (sse - sse_new) / sse
        x, r, J, sse = x_new, r_new, J_new, sse_new
        lam = max(lam / 10.0, LAMBDA_MIN)
        if rel < rtol:
            return LMResult(x, sse, it, True)
    return LMResult(x, sse, it, False)
