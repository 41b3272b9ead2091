"""Limited-memory BFGS with Armijo backtracking.

Full-batch, deterministic (no randomness, fixed starting point supplied by
the caller), converging on the infinity norm of the gradient. This is the
only smooth-problem driver in the package; SVM training goes through the
dual solvers instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .objectives import Objective


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    value: float
    grad_inf_norm: float


def minimize(
    fun: Objective,
    x0: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 1000,
    memory: int = 10,
) -> tuple[np.ndarray, SolveInfo]:
    """Minimize ``fun`` from ``x0``; returns (argmin, info).

    Stops when the gradient infinity norm drops to ``tol``. Curvature pairs
    with non-positive y's are skipped to keep the implicit Hessian positive
    definite; if the backtracking line search cannot find descent the
    current iterate is returned as converged-as-far-as-float-allows.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericError("objective not finite at the starting point")

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    for iteration in range(max_iter):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= tol:
            return x, SolveInfo(True, iteration, f, gnorm)

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            y_last = y_hist[-1]
            gamma = (s_hist[-1] @ y_last) / (y_last @ y_last)
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            beta = rho * (y @ q)
            q += (a - beta) * s
        direction = -q

        slope = g @ direction
        if slope >= 0:  # numerical breakdown, fall back to steepest descent
            direction = -g
            slope = -(g @ g)

        step = 1.0
        f_new = f
        x_new = x
        g_new = g
        accepted = False
        for _ in range(60):
            x_new = x + step * direction
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return x, SolveInfo(False, iteration, f, gnorm)

        s_vec = x_new - x
        y_vec = g_new - g
        ys = s_vec @ y_vec
        if ys > 1e-12 * max(1.0, float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec))):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / ys)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)
        x, f, g = x_new, f_new, g_new

    gnorm = float(np.max(np.abs(g)))
    return x, SolveInfo(gnorm <= tol, max_iter, f, gnorm)
