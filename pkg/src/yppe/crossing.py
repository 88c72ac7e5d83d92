"""Crossing time of two fitted conditional survival curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .baseline import TimeGrid
from .inference import FitResult
from .model import ParameterVector, conditional_survival

SCAN_POINTS = 256
ROOT_TOLERANCE = 1e-9
# scan starts this fraction of the horizon above zero
SCAN_START = 1e-6


@dataclass(frozen=True)
class CrossingResult:
    crossing_time: Optional[float]
    bracket: Optional[tuple[float, float]]
    difference_at_root: Optional[float]
    search_horizon: float

    @property
    def found(self) -> bool:
        return self.crossing_time is not None


def survival_difference(params: ParameterVector, grid: TimeGrid, z1, z2):
    """``g(t) = S(t|z1) - S(t|z2)`` as a callable."""
    pe = params.baseline(grid)

    def g(t):
        return conditional_survival(params, pe, z1, t) - conditional_survival(params, pe, z2, t)

    return g


def find_crossing(
    fit: FitResult,
    grid: TimeGrid | None = None,
    z1=None,
    z2=None,
    horizon: float | None = None,
    scan_points: int = SCAN_POINTS,
) -> CrossingResult:
    """Earliest time in (0, horizon] at which S(t|z1) and S(t|z2) cross.

    ``g = S(.|z1) - S(.|z2)`` is scanned on ``scan_points`` geometrically
    spaced times and the first sign change is refined with Brent's method.
    With several crossings only the earliest one the scan resolves is
    returned. No sign change gives a result with ``crossing_time=None``.
    ``horizon`` defaults to the largest observed time of the fitted data.
    """
    grid = grid or fit.grid
    z1 = np.asarray(z1, dtype=float).reshape(-1)
    z2 = np.asarray(z2, dtype=float).reshape(-1)
    if z1.shape != z2.shape:
        raise ValueError("covariate profiles have different lengths")
    if np.array_equal(z1, z2):
        raise ValueError("identical profiles never cross transversally")
    if horizon is None:
        horizon = fit.max_time
    if horizon is None or not horizon > 0 or not np.isfinite(horizon):
        raise ValueError("horizon must be a positive finite time")
    if scan_points < 2:
        raise ValueError("scan_points must be >= 2")

    g = survival_difference(fit.estimates, grid, z1, z2)
    ts = np.geomspace(SCAN_START * horizon, horizon, scan_points)
    gs = g(ts)
    signs = np.sign(gs)

    for i in range(len(ts) - 1):
        if signs[i] == 0:
            continue
        if signs[i + 1] == 0:
            # exact zero on the scan; bracket it with its neighbours
            j = min(i + 2, len(ts) - 1)
            if j == i + 1 or signs[j] == signs[i]:
                continue
            lo, hi = ts[i], ts[j]
        elif signs[i] != signs[i + 1]:
            lo, hi = ts[i], ts[i + 1]
        else:
            continue
        root = brentq(g, lo, hi, xtol=1e-10 * horizon, rtol=4 * np.finfo(float).eps, maxiter=200)
        return CrossingResult(float(root), (float(lo), float(hi)), float(g(root)), float(horizon))

    return CrossingResult(None, None, None, float(horizon))
