"""Limited-memory BFGS with a backtracking Armijo line search.

Used by the logistic regression model; also exposes a central finite
difference gradient for checking analytic gradients in tests.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]

# Curvature pairs with s.y at or below this are skipped to keep H positive definite.
CURVATURE_EPS = 1e-10
# Relative change in f treated as rounding noise by the line search.
FLAT_RTOL = 1e-14


class OptimizationError(RuntimeError):
    pass


class LineSearchError(OptimizationError):
    pass


@dataclass(frozen=True)
class LbfgsParams:
    memory: int = 10
    grad_tolerance: float = 1e-8
    max_iters: int = 500
    c1: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 50
    # Refine each accepted step by one quadratic interpolation. Exact on
    # quadratics; slows convergence on strongly curved valleys.
    interpolate: bool = False

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if not 0 < self.c1 < 1 or not 0 < self.shrink < 1:
            raise ValueError("line search constants must lie in (0, 1)")


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    grad: np.ndarray


def _two_loop(grad, s_hist, y_hist):
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((a, rho))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (a, rho) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _checked(value, what):
    if not np.all(np.isfinite(value)):
        raise OptimizationError(f"non-finite {what} encountered")
    return value


def lbfgs_minimize(
    f: Objective,
    g: Gradient,
    x0,
    params: LbfgsParams | None = None,
) -> LbfgsResult:
    """Minimize ``f`` from ``x0``.

    Each iteration backtracks from a unit step until the Armijo condition
    holds. Close to a minimum, where f changes only at rounding level, a
    trial step is accepted instead if it lowers the largest gradient entry.
    With ``params.interpolate`` the accepted step is refined once by
    minimizing the quadratic through f(x), f'(x; d) and f(x + a d), kept
    only if it lowers f further.
    """
    params = params or LbfgsParams()
    x = np.array(x0, dtype=float)
    fx = float(_checked(f(x), "objective"))
    gx = np.array(_checked(g(x), "gradient"), dtype=float)
    s_hist: deque = deque(maxlen=params.memory)
    y_hist: deque = deque(maxlen=params.memory)

    iterations = 0
    while True:
        if np.max(np.abs(gx), initial=0.0) <= params.grad_tolerance:
            return LbfgsResult(x, fx, iterations, True, gx)
        if iterations >= params.max_iters:
            return LbfgsResult(x, fx, iterations, False, gx)

        d = -_two_loop(gx, list(s_hist), list(y_hist))
        slope = gx @ d
        if not slope < 0:
            s_hist.clear()
            y_hist.clear()
            d = -gx
            slope = gx @ d
        # Without curvature information, cap the first step length at 1.
        step = 1.0 if s_hist else min(1.0, 1.0 / np.linalg.norm(d))

        g_new = None
        for _ in range(params.max_halvings + 1):
            x_new = x + step * d
            f_new = f(x_new)
            if np.isfinite(f_new) and f_new <= fx + params.c1 * step * slope:
                break
            if np.isfinite(f_new) and abs(f_new - fx) <= FLAT_RTOL * max(1.0, abs(fx)):
                # f can no longer resolve the decrease; fall back on the gradient.
                g_try = np.array(_checked(g(x_new), "gradient"), dtype=float)
                if np.max(np.abs(g_try)) < np.max(np.abs(gx)):
                    g_new = g_try
                    break
            step *= params.shrink
        else:
            raise LineSearchError(
                f"no sufficient decrease after {params.max_halvings} halvings"
            )

        curvature = f_new - fx - step * slope
        if params.interpolate and curvature > 0:
            trial = -slope * step * step / (2.0 * curvature)
            if trial > 0 and trial != step:
                x_try = x + trial * d
                f_try = f(x_try)
                if np.isfinite(f_try) and f_try < f_new and f_try <= fx + params.c1 * trial * slope:
                    x_new, f_new, g_new = x_try, f_try, None

        if g_new is None:
            g_new = np.array(_checked(g(x_new), "gradient"), dtype=float)
        s = x_new - x
        y = g_new - gx
        if s @ y > CURVATURE_EPS:
            s_hist.append(s)
            y_hist.append(y)
        x, fx, gx = x_new, float(f_new), g_new
        iterations += 1


def finite_diff_grad(f: Objective, x, h: float = 1e-5) -> np.ndarray:
    """Central difference gradient of ``f`` at ``x``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        hi, lo = f(x + step), f(x - step)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise OptimizationError(f"non-finite objective near x along coordinate {i}")
        grad.flat[i] = (hi - lo) / (2.0 * h)
    return grad
