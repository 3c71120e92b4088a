"""Quasi-Newton minimisation with backtracking line search.

The objective is a smooth but possibly non-convex function of an
unconstrained vector. BFGS with an Armijo backtracking line search is the
main path; when the line search cannot make progress the inverse Hessian
approximation is reset and a steepest-descent step with step halving is
tried instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ARMIJO_C1 = 1e-4
MAX_HALVINGS = 60
MAX_STEP = 10.0


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def _finite(v, g):
    return np.isfinite(v) and np.all(np.isfinite(g))


def _line_search(fg, x, v, g, d):
    """Backtrack along ``d``; returns (x, v, g, t) or None."""
    slope = float(g @ d)
    big = np.max(np.abs(d))
    t = min(1.0, MAX_STEP / big) if big > 0 else 1.0
    gnorm = np.max(np.abs(g))
    # value changes below this are rounding noise
    noise = 16.0 * np.finfo(float).eps * max(1.0, abs(v))
    for _ in range(MAX_HALVINGS):
        x_new = x + t * d
        v_new, g_new = fg(x_new)
        if _finite(v_new, g_new):
            if v_new <= v + ARMIJO_C1 * t * slope:
                return x_new, v_new, g_new, t
            # near the optimum the decrease drowns in rounding; accept a
            # step that leaves the value unchanged to within noise but
            # shrinks the gradient
            if v_new <= v + noise and np.max(np.abs(g_new)) < gnorm:
                return x_new, v_new, g_new, t
        t *= 0.5
    return None


def bfgs(fg: Callable, x0, is_converged: Callable, max_iter: int = 500) -> OptimResult:
    """Minimise ``fg`` (returning value and gradient) from ``x0``.

    ``is_converged(x, g)`` decides termination, which lets callers test the
    gradient in a different parameterisation than the one optimised.
    """
    x = np.array(x0, dtype=float)
    v, g = fg(x)
    if not _finite(v, g):
        return OptimResult(x, v, g, 0, False, "non-finite objective at start", [v])
    trace = [v]
    n = x.size
    H = np.eye(n)
    scaled = False
    for it in range(1, max_iter + 1):
        if is_converged(x, g):
            return OptimResult(x, v, g, it - 1, True, "gradient tolerance reached", trace)
        d = -H @ g
        if not g @ d < 0:
            H = np.eye(n)
            scaled = False
            d = -g
        step = _line_search(fg, x, v, g, d)
        if step is None and not np.allclose(d, -g):
            # fallback: steepest descent with step halving
            H = np.eye(n)
            scaled = False
            step = _line_search(fg, x, v, g, -g)
        if step is None:
            return OptimResult(x, v, g, it, is_converged(x, g), "line search failed", trace)
        x_new, v_new, g_new, _ = step
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if not scaled:
                H = np.eye(n) * (sy / float(yv @ yv))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ yv
            H = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                 + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s))
        x, v, g = x_new, v_new, g_new
        trace.append(v)
    return OptimResult(x, v, g, max_iter, is_converged(x, g), "iteration limit", trace)
