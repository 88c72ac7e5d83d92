"""Kaplan-Meier product-limit estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SurvivalData


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous step function; S = 1 before ``event_times[0]``."""

    event_times: np.ndarray
    survival_values: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray

    def __call__(self, t):
        """Evaluate S(t) (value after the jump at an event time)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        values = np.concatenate([[1.0], self.survival_values])[idx]
        return float(values) if values.ndim == 0 else values

    def left_limit(self, t):
        """S(t-), the value just before ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="left")
        values = np.concatenate([[1.0], self.survival_values])[idx]
        return float(values) if values.ndim == 0 else values


def kaplan_meier(data: SurvivalData, stratum: tuple[str, float] | None = None) -> StepSurvival:
    """Product-limit estimate over the distinct event times.

    ``stratum`` is an optional ``(covariate name, value)`` filter. Subjects
    censored at an event time are still at risk at that time.
    """
    if stratum is not None:
        name, value = stratum
        if name not in data.covariate_names:
            raise ValueError(f"unknown stratum column {name!r}")
        mask = data.covariates[:, data.covariate_names.index(name)] == float(value)
        if not mask.any():
            raise ValueError(f"empty stratum {name}={value}")
        data = data.subset(mask)

    time = data.time
    status = data.status
    event_times = np.unique(time[status == 1])
    sorted_time = np.sort(time)
    at_risk = len(time) - np.searchsorted(sorted_time, event_times, side="left")
    deaths = np.array([np.sum((time == t) & (status == 1)) for t in event_times], dtype=int)
    surv = np.cumprod(1.0 - deaths / at_risk)
    return StepSurvival(event_times, surv, at_risk.astype(int), deaths)
