"""BFGS minimisation with an Armijo backtracking line search."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

ARMIJO_SLOPE = 1e-4
CONTRACTION = 0.5
MAX_BACKTRACKS = 60
# consecutive accepted steps with negligible objective change before giving up
STALL_LIMIT = 50


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str


def backtracking(f, x, fx, gx, direction, step=1.0, slope_factor=ARMIJO_SLOPE, contraction=CONTRACTION):
    """Shrink ``step`` until the Armijo sufficient-decrease condition holds.

    Returns ``(step, f(x + step*direction))`` or ``(None, fx)`` when no
    acceptable step is found within MAX_BACKTRACKS contractions.
    """
    slope = float(gx @ direction)
    if slope >= 0:
        return None, fx
    for _ in range(MAX_BACKTRACKS):
        trial = f(x + step * direction)
        if np.isfinite(trial) and trial <= fx + slope_factor * step * slope:
            return step, trial
        step *= contraction
    return None, fx


def bfgs(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x0,
    *,
    max_iterations: int = 500,
    gradient_tolerance: float = 1e-6,
    objective_tolerance: float = 1e-10,
    max_step: float = 10.0,
) -> BFGSResult:
    """Minimise ``f`` from ``x0``.

    Converges when the gradient max-norm drops below ``gradient_tolerance``.
    The run also stops, unconverged, after STALL_LIMIT consecutive steps
    whose relative objective change is below ``objective_tolerance``. The initial trial step is capped at Euclidean
    length ``max_step`` so early steps in exp-parameterised directions do
    not overflow.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    fx = float(f(x))
    gx = np.asarray(grad(x), dtype=float)
    if not np.isfinite(fx) or not np.all(np.isfinite(gx)):
        return BFGSResult(x, fx, gx, 0, False, "non-finite objective at starting point")

    Hinv = np.eye(n)
    first = True
    stalled = 0
    for it in range(1, max_iterations + 1):
        if np.max(np.abs(gx)) < gradient_tolerance:
            return BFGSResult(x, fx, gx, it - 1, True, "gradient below tolerance")

        direction = -Hinv @ gx
        if gx @ direction >= 0:
            # lost positive definiteness; restart from steepest descent
            Hinv = np.eye(n)
            first = True
            direction = -gx
        norm = np.linalg.norm(direction)
        step0 = min(1.0, max_step / norm) if norm > 0 else 1.0

        step, f_new = backtracking(f, x, fx, gx, direction, step0)
        if step is None and not first:
            Hinv = np.eye(n)
            first = True
            direction = -gx
            norm = np.linalg.norm(direction)
            step, f_new = backtracking(f, x, fx, gx, direction, min(1.0, max_step / norm))
        if step is None:
            return BFGSResult(x, fx, gx, it - 1, False, "line search failed")

        s = step * direction
        x_new = x + s
        g_new = np.asarray(grad(x_new), dtype=float)
        yv = g_new - gx
        sy = float(s @ yv)

        rel_change = abs(fx - f_new) / max(abs(fx), abs(f_new), 1.0)
        x, fx, gx = x_new, f_new, g_new

        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if first:
                # Shanno-Phua scaling of the initial inverse Hessian
                Hinv = np.eye(n) * (sy / float(yv @ yv))
                first = False
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = (
                Hinv
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s)
            )

        if np.max(np.abs(gx)) < gradient_tolerance:
            return BFGSResult(x, fx, gx, it, True, "gradient below tolerance")
        if rel_change < objective_tolerance:
            stalled += 1
            if stalled >= STALL_LIMIT:
                return BFGSResult(x, fx, gx, it, False, "objective stagnated above gradient tolerance")
        else:
            stalled = 0

    log.debug("BFGS hit max_iterations=%d", max_iterations)
    return BFGSResult(x, fx, gx, max_iterations, False, "maximum iterations reached")
