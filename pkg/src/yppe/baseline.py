"""Time grids and the piecewise-exponential baseline distribution.

A grid of cut points ``a_1 < ... < a_{m-1}`` partitions (0, inf) into the
intervals ``(a_{k-1}, a_k]`` (with ``a_0 = 0``) plus the open final interval
``(a_{m-1}, inf)``. The baseline hazard is constant on each interval.

Interval indices are 1-based in the public ``locate_interval`` to match the
usual I_1..I_m labelling; array-valued helpers return 0-based indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import SurvivalData


@dataclass(frozen=True)
class TimeGrid:
    cuts: tuple[float, ...] = ()

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        for c in cuts:
            if not math.isfinite(c) or c <= 0:
                raise ValueError(f"grid cut points must be finite and > 0, got {c!r}")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError("grid cut points must be strictly increasing")
        object.__setattr__(self, "cuts", cuts)

    @property
    def m(self) -> int:
        """Number of intervals."""
        return len(self.cuts) + 1

    @property
    def edges(self) -> np.ndarray:
        """``[0, a_1, ..., a_{m-1}, inf]``."""
        return np.concatenate([[0.0], self.cuts, [np.inf]])

    def locate(self, t) -> np.ndarray:
        """0-based interval index for each ``t > 0`` (vectorised)."""
        return np.searchsorted(np.asarray(self.cuts), np.asarray(t, dtype=float), side="left")

    def exposure(self, t) -> np.ndarray:
        """Overlap of ``[0, t]`` with each interval, shape ``(len(t), m)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        edges = self.edges
        lo, hi = edges[:-1], edges[1:]
        return np.clip(t[:, None], lo, hi) - lo


def build_grid_per_event(data: SurvivalData) -> TimeGrid:
    """One distinct event time per interval.

    Cuts are the sorted distinct event times without the largest, which
    falls in the open final interval, so every interval holds an event.
    """
    ev = data.event_times()
    if ev.size == 0:
        raise ValueError("no events in data")
    return TimeGrid(tuple(ev[:-1]))


def sqrt_n_intervals(n: int) -> int:
    return math.ceil(math.sqrt(n))


def build_grid_sqrt_n(data: SurvivalData) -> TimeGrid:
    """``m = ceil(sqrt(n))`` intervals with events spread evenly.

    With ``d`` distinct event times sorted ascending, cut ``k`` is the
    ``ceil(k*d/m)``-th of them, for k = 1..m-1.
    """
    ev = data.event_times()
    m = sqrt_n_intervals(data.n)
    d = ev.size
    if d < m:
        raise ValueError(
            f"sqrt-n grid needs m={m} distinct event times but data has only {d}"
        )
    # integer arithmetic for the ceiling keeps the rule exact
    idx = [-(-k * d // m) for k in range(1, m)]
    return TimeGrid(tuple(ev[i - 1] for i in idx))


def _check_time(t, strict: bool):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("time must be finite")
    if strict and np.any(arr <= 0):
        raise ValueError("time must be > 0")
    if not strict and np.any(arr < 0):
        raise ValueError("time must be >= 0")
    return arr


def locate_interval(grid: TimeGrid, t: float) -> int:
    """1-based index k with ``t`` in ``(a_{k-1}, a_k]`` (k = m for t > a_{m-1})."""
    _check_time(t, strict=True)
    return int(grid.locate(t)) + 1


@dataclass(frozen=True)
class PiecewiseExponential:
    grid: TimeGrid
    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in np.ravel(self.rates))
        if len(rates) != self.grid.m:
            raise ValueError(f"expected {self.grid.m} rates, got {len(rates)}")
        if not all(math.isfinite(r) and r > 0 for r in rates):
            raise ValueError("rates must be finite and > 0")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_log_rates(cls, grid: TimeGrid, log_rates: Sequence[float]) -> "PiecewiseExponential":
        return cls(grid, tuple(np.exp(np.asarray(log_rates, dtype=float))))

    @property
    def rate_array(self) -> np.ndarray:
        return np.asarray(self.rates)

    def cum_hazard(self, t):
        return cum_hazard(self, t)

    def survival(self, t):
        return baseline_survival(self, t)

    def hazard(self, t):
        return baseline_hazard(self, t)


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def cum_hazard(pe: PiecewiseExponential, t):
    """H0(t): sum over intervals of rate times overlap with [0, t]."""
    arr = _check_time(t, strict=False)
    flat = np.atleast_1d(arr).ravel()
    H = pe.grid.exposure(flat) @ pe.rate_array
    return _scalar_or_array(H[0] if np.ndim(arr) == 0 else H.reshape(arr.shape), t)


def baseline_survival(pe: PiecewiseExponential, t):
    return np.exp(-np.asarray(cum_hazard(pe, t))) if np.ndim(t) else math.exp(-cum_hazard(pe, t))


def baseline_cdf(pe: PiecewiseExponential, t):
    H = np.asarray(cum_hazard(pe, t))
    F = -np.expm1(-H)
    return float(F) if np.ndim(t) == 0 else F


def baseline_odds(pe: PiecewiseExponential, t):
    """R0(t) = F0/S0, evaluated as expm1(H0) so it stays finite for large H0."""
    H = np.asarray(cum_hazard(pe, t))
    R = np.expm1(H)
    return float(R) if np.ndim(t) == 0 else R


def baseline_hazard(pe: PiecewiseExponential, t):
    arr = _check_time(t, strict=True)
    h = pe.rate_array[pe.grid.locate(arr)]
    return float(h) if np.ndim(t) == 0 else h
