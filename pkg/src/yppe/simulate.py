"""Simulation from the YP model with a Weibull baseline and the Monte Carlo
harness that summarises repeated fits (Est., ASE, SSDE, RB, CI, CP).

Random numbers come from numpy's PCG64 generator. Every stream is keyed by
``SeedSequence(seed, spawn_key=...)``: the calibration pilot sample uses
key (0,), replication ``r`` uses key (1, r) and a standalone dataset uses
key (2,), so replications do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baseline import build_grid_per_event, build_grid_sqrt_n
from .data import SurvivalData
from .inference import CRITICAL_VALUE, FitConfig, fit

log = logging.getLogger(__name__)

COVARIATE_KINDS = ("bernoulli", "normal")
GRID_RULES = {"per-event": build_grid_per_event, "sqrt-n": build_grid_sqrt_n}
PILOT_SIZE = 100_000

_PILOT_KEY = (0,)
_REPLICATION_KEY = 1
_DATASET_KEY = (2,)


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimDesign:
    n: int
    true_psi: tuple[float, ...]
    true_phi: tuple[float, ...]
    covariate_spec: tuple[str, ...]
    weibull_alpha: float = 1.5
    weibull_gamma: float = 0.05
    target_censoring: float = 0.30
    seed: int = 0

    def __post_init__(self):
        psi = tuple(float(v) for v in np.ravel(self.true_psi))
        phi = tuple(float(v) for v in np.ravel(self.true_phi))
        spec = tuple(str(s).lower() for s in self.covariate_spec)
        object.__setattr__(self, "true_psi", psi)
        object.__setattr__(self, "true_phi", phi)
        object.__setattr__(self, "covariate_spec", spec)
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if not (len(psi) == len(phi) == len(spec)):
            raise ValueError("true_psi, true_phi and covariate_spec must have equal length")
        for kind in spec:
            if kind not in COVARIATE_KINDS:
                raise ValueError(f"unknown covariate kind {kind!r}; use one of {COVARIATE_KINDS}")
        if not (self.weibull_alpha > 0 and self.weibull_gamma > 0):
            raise ValueError("weibull parameters must be > 0")
        if not 0 < self.target_censoring < 1:
            raise ValueError("target_censoring must lie in (0, 1)")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    @property
    def p(self) -> int:
        return len(self.true_psi)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(f"z{j + 1}" for j in range(self.p))

    @property
    def true_values(self) -> np.ndarray:
        return np.array(self.true_psi + self.true_phi)

    def parameter_names(self) -> list[str]:
        names = self.covariate_names
        return [f"psi_{c}" for c in names] + [f"phi_{c}" for c in names]


def design_rng(design: SimDesign, key: Sequence[int]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(design.seed, spawn_key=tuple(key))))


def weibull_yp_survival(t, lam, theta, alpha, gamma):
    """Closed-form S(t|z) under a Weibull baseline S0 = exp(-gamma t^alpha)."""
    R0 = np.expm1(gamma * np.power(t, alpha))
    return np.power(1.0 + (lam / theta) * R0, -theta)


def invert_yp_weibull(u, lam, theta, alpha, gamma):
    """Failure time T with S(T|z) = u under the Weibull-baseline YP model.

    Vectorised over ``u``, ``lam`` and ``theta``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0) | ~(u < 1)):
        raise ValueError("u must lie strictly inside (0, 1)")
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(lam <= 0) or np.any(theta <= 0) or alpha <= 0 or gamma <= 0:
        raise ValueError("lam, theta, alpha and gamma must be > 0")
    # baseline odds R0 = (theta/lam) * expm1(a) with a = -log(u)/theta,
    # carried in log space: log expm1(a) = a + log1p(-exp(-a))
    a = -np.log(u) / theta
    log_odds = np.log(theta / lam) + a + np.log1p(-np.exp(-a))
    T = np.power(np.logaddexp(0.0, log_odds) / gamma, 1.0 / alpha)
    return float(T) if T.ndim == 0 else T


def _draw_covariates(design: SimDesign, rng: np.random.Generator, n: int) -> np.ndarray:
    Z = np.empty((n, design.p))
    for j, kind in enumerate(design.covariate_spec):
        if kind == "bernoulli":
            Z[:, j] = (rng.random(n) < 0.5).astype(float)
        else:
            Z[:, j] = rng.standard_normal(n)
    return Z


def _draw_failure_times(design: SimDesign, rng: np.random.Generator, n: int):
    Z = _draw_covariates(design, rng, n)
    lam = np.exp(Z @ np.asarray(design.true_psi))
    theta = np.exp(Z @ np.asarray(design.true_phi))
    # 1 - U(0,1) lies in (0, 1]; reject the measure-zero endpoint
    u = 1.0 - rng.random(n)
    u[u >= 1.0] = np.nextafter(1.0, 0.0)
    T = invert_yp_weibull(u, lam, theta, design.weibull_alpha, design.weibull_gamma)
    return Z, T


def expected_censoring(T: np.ndarray, tau: float) -> float:
    """Mean of P(C < T) for C ~ U(0, tau), given failure times T."""
    return float(np.mean(np.minimum(T / tau, 1.0)))


def calibrate_tau(design: SimDesign, pilot_size: int = PILOT_SIZE, tolerance: float = 1e-6) -> float:
    """Censoring horizon tau for C ~ U(0, tau) giving the target censoring rate.

    The expected censoring proportion on a fixed pilot sample is decreasing
    in tau; it is solved by bisection on log(tau).
    """
    rng = design_rng(design, _PILOT_KEY)
    _, T = _draw_failure_times(design, rng, pilot_size)
    target = design.target_censoring

    lo = float(np.min(T)) * 1e-3
    hi = float(np.max(T))
    ceiling = hi * 1e6
    while expected_censoring(T, hi) > target:
        hi *= 2.0
        if hi > ceiling:
            raise CalibrationError(
                f"censoring {expected_censoring(T, ceiling):.3g} at tau={ceiling:.3g} "
                f"is still above target {target}"
            )
    if expected_censoring(T, lo) < target:
        raise CalibrationError(f"target censoring {target} unreachable even at tau={lo:.3g}")

    for _ in range(200):
        mid = math.sqrt(lo * hi)
        c = expected_censoring(T, mid)
        if abs(c - target) <= tolerance:
            return mid
        if c > target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def generate_dataset(design: SimDesign, tau: float, rng: np.random.Generator | None = None) -> SurvivalData:
    """Draw covariates, failure times, U(0, tau) censoring and return the
    observed data ``(min(T, C), 1{T <= C}, z)``."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    rng = rng or design_rng(design, _DATASET_KEY)
    Z, T = _draw_failure_times(design, rng, design.n)
    C = tau * rng.random(design.n)
    # a zero censoring draw would give a zero observed time
    C[C <= 0] = np.nextafter(0.0, 1.0)
    y = np.minimum(T, C)
    status = (T <= C).astype(int)
    return SurvivalData(y, status, Z, design.covariate_names)


def relative_bias(estimate: float, true: float) -> float:
    """100 * (estimate - true) / |true|, in percent."""
    if true == 0:
        raise ValueError("relative bias is undefined for a true value of 0")
    return 100.0 * (estimate - true) / abs(true)


@dataclass(frozen=True)
class McRow:
    name: str
    true: float
    est: float
    ase: float
    ssde: Optional[float]
    rb_pct: Optional[float]
    ci_lower: float
    ci_upper: float
    cp: float


@dataclass
class McSummary:
    rows: list[McRow]
    replications_attempted: int
    replications_converged: int
    tau: float
    grid_rule: str
    estimates: np.ndarray = field(repr=False)
    standard_errors: np.ndarray = field(repr=False)

    def row(self, name: str) -> McRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(MC_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.name, _fmt(r.true), _fmt(r.est), _fmt(r.ase), _fmt(r.ssde), _fmt(r.rb_pct),
                 _fmt(r.ci_lower), _fmt(r.ci_upper), _fmt(r.cp), self.replications_converged]
            )
        return out.getvalue()


MC_COLUMNS = ("par", "true", "est", "ase", "ssde", "rb_pct", "ci_lower", "ci_upper", "cp", "n_converged")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "NA"
    return f"{v:.6f}"


def _one_replication(args):
    design, tau, index, grid_rule, config = args
    rng = design_rng(design, (_REPLICATION_KEY, index))
    data = generate_dataset(design, tau, rng)
    p = design.p
    try:
        grid = GRID_RULES[grid_rule](data)
        result = fit(data, grid, config)
    except ValueError as exc:
        log.debug("replication %d failed: %s", index, exc)
        return None
    if not result.converged or result.covariance is None:
        return None
    se = result.standard_errors()[: 2 * p]
    if not np.all(np.isfinite(se)) or np.any(se <= 0):
        return None
    return result.estimates.pack()[: 2 * p], se


def default_workers() -> int:
    env = os.environ.get("YPPE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_monte_carlo(
    design: SimDesign,
    replications: int,
    grid_rule: str = "per-event",
    config: FitConfig | None = None,
    workers: int = 1,
    tau: float | None = None,
) -> McSummary:
    """Generate, fit and summarise ``replications`` datasets.

    Summaries use converged replications with a usable covariance only.
    Results are identical for any ``workers`` value.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if grid_rule not in GRID_RULES:
        raise ValueError(f"unknown grid rule {grid_rule!r}; use one of {sorted(GRID_RULES)}")
    config = config or FitConfig()
    if tau is None:
        tau = calibrate_tau(design)

    jobs = [(design, tau, r, grid_rule, config) for r in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_replication, jobs, chunksize=max(1, replications // (4 * workers))))
    else:
        outcomes = [_one_replication(j) for j in jobs]

    kept = [o for o in outcomes if o is not None]
    if not kept:
        raise RuntimeError(f"none of the {replications} replications converged")
    est = np.array([o[0] for o in kept])
    se = np.array([o[1] for o in kept])
    return _summarise(design, est, se, replications, tau, grid_rule)


def _summarise(design, est, se, attempted, tau, grid_rule) -> McSummary:
    truth = design.true_values
    lower = est - CRITICAL_VALUE * se
    upper = est + CRITICAL_VALUE * se
    covered = (lower <= truth) & (truth <= upper)
    k = est.shape[0]
    rows = []
    for j, name in enumerate(design.parameter_names()):
        mean = float(est[:, j].mean())
        rows.append(
            McRow(
                name=name,
                true=float(truth[j]),
                est=mean,
                ase=float(se[:, j].mean()),
                ssde=float(est[:, j].std(ddof=1)) if k > 1 else None,
                rb_pct=relative_bias(mean, truth[j]) if truth[j] != 0 else None,
                ci_lower=float(lower[:, j].mean()),
                ci_upper=float(upper[:, j].mean()),
                cp=float(covered[:, j].mean()),
            )
        )
    return McSummary(rows, attempted, k, float(tau), grid_rule, est, se)
