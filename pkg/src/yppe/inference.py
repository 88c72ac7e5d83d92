"""Maximum-likelihood fitting, observed information and Wald summaries."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .baseline import PiecewiseExponential, TimeGrid
from .data import SurvivalData
from .model import LikelihoodTerms, ParameterVector
from .optimize import bfgs

log = logging.getLogger(__name__)

# Fixed 95% critical value; reported intervals are estimate +/- 1.96 SE.
CRITICAL_VALUE = 1.96


class InformationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    objective_tolerance: float = 1e-10
    initial_values: Optional[ParameterVector] = None
    hessian_step: float = 1e-5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("gradient_tolerance", "objective_tolerance", "hessian_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class WaldRow:
    name: str
    estimate: float
    se: float
    lower: float
    upper: float
    z: float
    p_value: float


def wald_row(name: str, estimate: float, se: float) -> WaldRow:
    z = estimate / se if se > 0 else (0.0 if estimate == 0 else np.copysign(np.inf, estimate))
    return WaldRow(
        name=name,
        estimate=float(estimate),
        se=float(se),
        lower=float(estimate - CRITICAL_VALUE * se),
        upper=float(estimate + CRITICAL_VALUE * se),
        z=float(z),
        p_value=float(2.0 * norm.sf(abs(z))),
    )


@dataclass
class FitResult:
    estimates: ParameterVector
    loglik: float
    covariance: Optional[np.ndarray]
    converged: bool
    iterations: int
    grid: TimeGrid
    covariate_names: tuple[str, ...]
    gradient: np.ndarray
    message: str = ""
    max_time: Optional[float] = None
    information: Optional[np.ndarray] = field(default=None, repr=False)
    summary: Optional[list[WaldRow]] = None

    @property
    def gradient_max_norm(self) -> float:
        return float(np.max(np.abs(self.gradient)))

    @property
    def baseline(self) -> PiecewiseExponential:
        return self.estimates.baseline(self.grid)

    @property
    def parameter_names(self) -> list[str]:
        return self.estimates.names(self.covariate_names)

    def standard_errors(self) -> np.ndarray:
        if self.covariance is None:
            raise InformationError("covariance unavailable: observed information is singular")
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.covariance))


def initialize(data: SurvivalData, grid: TimeGrid) -> ParameterVector:
    """Null coefficients and the closed-form PE rates ``events / exposure``
    per interval; intervals without events get the overall event rate."""
    exposure = grid.exposure(data.time).sum(axis=0)
    events = np.bincount(
        grid.locate(data.time), weights=data.status.astype(float), minlength=grid.m
    )
    total_exposure = exposure.sum()
    if not total_exposure > 0:
        raise ValueError("zero total exposure")
    if events.sum() == 0:
        raise ValueError("no events in data")
    overall = events.sum() / total_exposure
    rates = np.full(grid.m, overall)
    ok = (events > 0) & (exposure > 0)
    rates[ok] = events[ok] / exposure[ok]
    zeros = np.zeros(data.p)
    return ParameterVector(zeros, zeros, np.log(rates))


def hessian_from_gradient(grad: Callable[[np.ndarray], np.ndarray], x, step: float = 1e-5) -> np.ndarray:
    """Symmetrised central-difference Jacobian of ``grad`` at ``x``.

    Coordinate j uses the step ``step * max(1, |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for j in range(n):
        h = step * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        H[:, j] = (np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2.0 * h)
    H = 0.5 * (H + H.T)
    bad = np.argwhere(~np.isfinite(H))
    if bad.size:
        i, j = bad[0]
        raise InformationError(f"non-finite Hessian entry at coordinates ({i}, {j})")
    return H


def observed_information(
    params, grid: TimeGrid, data: SurvivalData, step: float = 1e-5, terms: LikelihoodTerms | None = None
) -> np.ndarray:
    """Negative Hessian of the log-likelihood by differencing the analytic gradient."""
    terms = terms or LikelihoodTerms(data, grid)
    x = params.pack() if isinstance(params, ParameterVector) else np.asarray(params, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("parameters must be finite")
    return -hessian_from_gradient(terms.gradient, x, step)


def _invert_information(info: np.ndarray) -> Optional[np.ndarray]:
    try:
        cond = np.linalg.cond(info)
        if not np.isfinite(cond) or cond > 1e14:
            return None
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return None
    return 0.5 * (cov + cov.T)


def wald_summary(fit: FitResult) -> list[WaldRow]:
    """Rows for psi then phi: estimate, SE, 95% CI, z and two-sided p-value."""
    if fit.covariance is None:
        raise InformationError("covariance unavailable: cannot build Wald summary")
    p = fit.estimates.p
    se = fit.standard_errors()
    names = fit.parameter_names
    est = fit.estimates.pack()
    return [wald_row(names[j], est[j], se[j]) for j in range(2 * p)]


def rate_summary(fit: FitResult) -> list[WaldRow]:
    """Baseline rates on the natural scale, SEs by the delta method."""
    if fit.covariance is None:
        raise InformationError("covariance unavailable: cannot build rate summary")
    p = fit.estimates.p
    rates = fit.estimates.rates
    se_log = fit.standard_errors()[2 * p :]
    return [wald_row(f"xi_{k + 1}", r, r * s) for k, (r, s) in enumerate(zip(rates, se_log))]


def fit(data: SurvivalData, grid: TimeGrid, config: FitConfig | None = None) -> FitResult:
    """Maximise the log-likelihood by BFGS and attach the Wald inference.

    Non-convergence does not raise; the returned result has
    ``converged=False`` and holds the last iterate. A singular observed
    information leaves ``covariance`` and ``summary`` as None.
    """
    config = config or FitConfig()
    if data.n_events == 0:
        raise ValueError("no events in data")
    dim = 2 * data.p + grid.m
    if data.n < dim:
        warnings.warn(
            f"n={data.n} is smaller than the number of parameters ({dim})", stacklevel=2
        )

    terms = LikelihoodTerms(data, grid)
    start = config.initial_values or initialize(data, grid)
    if start.p != data.p or start.m != grid.m:
        raise ValueError("initial values do not match the data/grid dimensions")

    res = bfgs(
        lambda x: -terms.loglik(x),
        lambda x: -terms.gradient(x),
        start.pack(),
        max_iterations=config.max_iterations,
        gradient_tolerance=config.gradient_tolerance,
        objective_tolerance=config.objective_tolerance,
    )
    if not res.converged:
        log.info("fit did not converge: %s", res.message)
    estimates = ParameterVector.unpack(res.x, data.p)

    covariance = None
    info = None
    try:
        info = observed_information(estimates, grid, data, config.hessian_step, terms)
        covariance = _invert_information(info)
    except InformationError as exc:
        log.info("observed information unavailable: %s", exc)

    result = FitResult(
        estimates=estimates,
        loglik=-res.fun,
        covariance=covariance,
        converged=res.converged,
        iterations=res.iterations,
        grid=grid,
        covariate_names=data.covariate_names,
        gradient=-res.grad,
        message=res.message,
        max_time=float(data.time.max()),
        information=info,
    )
    if covariance is not None:
        result.summary = wald_summary(result)
    return result
