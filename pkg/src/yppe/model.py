"""Yang-Prentice hazard-ratio model with a piecewise-exponential baseline.

For a covariate row ``z`` the short- and long-term hazard ratios are
``lam = exp(z @ psi)`` and ``theta = exp(z @ phi)`` and

    S(t|z) = (1 + (lam/theta) * R0(t)) ** (-theta)
    h(t|z) = lam * theta * h0(t) / (lam * F0(t) + theta * S0(t))

Everything below is evaluated through the baseline cumulative hazard H0
with log-space forms, so nothing overflows once H0 is large.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .baseline import PiecewiseExponential, TimeGrid
from .data import SurvivalData

__all__ = [
    "ParameterVector",
    "SurvivalData",
    "LikelihoodTerms",
    "linear_predictors",
    "conditional_survival",
    "conditional_hazard",
    "log_likelihood",
    "log_likelihood_gradient",
]


@dataclass(frozen=True)
class ParameterVector:
    """Packed as ``(psi_1..psi_p, phi_1..phi_p, log xi_1..log xi_m)``."""

    psi: np.ndarray
    phi: np.ndarray
    log_rates: np.ndarray

    def __post_init__(self):
        psi = np.array(self.psi, dtype=float).reshape(-1)
        phi = np.array(self.phi, dtype=float).reshape(-1)
        log_rates = np.array(self.log_rates, dtype=float).reshape(-1)
        if psi.shape != phi.shape:
            raise ValueError(f"psi has {psi.size} entries but phi has {phi.size}")
        if log_rates.size < 1:
            raise ValueError("at least one baseline rate is required")
        for a in (psi, phi, log_rates):
            a.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "log_rates", log_rates)

    @property
    def p(self) -> int:
        return self.psi.size

    @property
    def m(self) -> int:
        return self.log_rates.size

    @property
    def rates(self) -> np.ndarray:
        return np.exp(self.log_rates)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.psi, self.phi, self.log_rates])

    @classmethod
    def unpack(cls, x, p: int) -> "ParameterVector":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size < 2 * p + 1:
            raise ValueError(f"packed vector of length {x.size} too short for p={p}")
        return cls(x[:p], x[p : 2 * p], x[2 * p :])

    def baseline(self, grid: TimeGrid) -> PiecewiseExponential:
        if grid.m != self.m:
            raise ValueError(f"grid has {grid.m} intervals but parameters carry {self.m} rates")
        return PiecewiseExponential.from_log_rates(grid, self.log_rates)

    def names(self, covariate_names) -> list[str]:
        covariate_names = list(covariate_names)
        if len(covariate_names) != self.p:
            raise ValueError("covariate name count does not match p")
        return (
            [f"psi_{c}" for c in covariate_names]
            + [f"phi_{c}" for c in covariate_names]
            + [f"log_xi_{k + 1}" for k in range(self.m)]
        )


def _coerce_params(params, p: int | None = None) -> ParameterVector:
    if isinstance(params, ParameterVector):
        return params
    if p is None:
        raise TypeError("packed parameters need p")
    return ParameterVector.unpack(params, p)


def _row(params: ParameterVector, z) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != params.p:
        raise ValueError(f"covariate row has {z.size} entries, model has p={params.p}")
    return z


def linear_predictors(params: ParameterVector, z) -> tuple[float, float]:
    """``(lam, theta) = (exp(z.psi), exp(z.phi))``."""
    z = _row(params, z)
    return float(np.exp(z @ params.psi)), float(np.exp(z @ params.phi))


def _log_F0(H):
    # log(1 - exp(-H)); -inf at H == 0
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(-H))


def _log_softplus(x):
    # log(log(1 + e^x)) without underflow for very negative x
    x = np.asarray(x, dtype=float)
    small = x < -30.0
    with np.errstate(divide="ignore"):
        big = np.log(np.logaddexp(0.0, np.where(small, 0.0, x)))
    return np.where(small, x, big)


def _log_softplus_minus_expit(u):
    # log(log(1 + e^u) - 1/(1 + e^-u)); the difference is ~e^(2u)/2 for u << 0
    u = np.asarray(u, dtype=float)
    small = u < -20.0
    safe = np.where(small, 0.0, u)
    with np.errstate(divide="ignore"):
        big = np.log(np.logaddexp(0.0, safe) - expit(safe))
    return np.where(small, 2.0 * u - np.log(2.0), big)


def _log_survival_from_H(H, eta_s, eta_l):
    # -theta * log1p((lam/theta) * expm1(H)) with log expm1(H) = H + log F0;
    # the product is formed in log space so theta near 0 or inf stays finite
    log_odds = (eta_s - eta_l) + H + _log_F0(H)
    return -np.exp(eta_l + _log_softplus(log_odds))


def _log_denominator(H, eta_s, eta_l):
    # log(lam*F0 + theta*S0)
    return np.logaddexp(eta_s + _log_F0(H), eta_l - H)


def conditional_survival(params: ParameterVector, pe: PiecewiseExponential, z, t):
    """S(t|z); accepts scalar or array ``t >= 0``."""
    z = _row(params, z)
    H = np.asarray(pe.cum_hazard(t))
    logS = _log_survival_from_H(H, z @ params.psi, z @ params.phi)
    S = np.exp(logS)
    return float(S) if np.ndim(t) == 0 else S


def conditional_hazard(params: ParameterVector, pe: PiecewiseExponential, z, t):
    """h(t|z) for ``t > 0``."""
    z = _row(params, z)
    h0 = np.asarray(pe.hazard(t))
    H = np.asarray(pe.cum_hazard(t))
    eta_s, eta_l = z @ params.psi, z @ params.phi
    h = np.exp(eta_s + eta_l - _log_denominator(H, eta_s, eta_l)) * h0
    return float(h) if np.ndim(t) == 0 else h


@dataclass(frozen=True)
class LikelihoodTerms:
    """Data-dependent pieces of the likelihood that do not change with the
    parameters: per-subject exposure to each interval, the interval holding
    each observed time, and per-interval event counts."""

    data: SurvivalData
    grid: TimeGrid
    exposure: np.ndarray = field(init=False, repr=False)
    interval: np.ndarray = field(init=False, repr=False)
    events_per_interval: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        exposure = self.grid.exposure(self.data.time)
        interval = self.grid.locate(self.data.time)
        events = np.bincount(
            interval, weights=self.data.status.astype(float), minlength=self.grid.m
        )
        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "interval", interval)
        object.__setattr__(self, "events_per_interval", events)

    @property
    def dim(self) -> int:
        return 2 * self.data.p + self.grid.m

    def _pieces(self, x):
        p = self.data.p
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} packed parameters, got shape {x.shape}")
        Z = self.data.covariates
        eta_s = Z @ x[:p]
        eta_l = Z @ x[p : 2 * p]
        log_rates = x[2 * p :]
        H = self.exposure @ np.exp(log_rates)
        return eta_s, eta_l, log_rates, H

    def subject_loglik(self, x) -> np.ndarray:
        eta_s, eta_l, log_rates, H = self._pieces(x)
        delta = self.data.status
        event_part = eta_s + eta_l + log_rates[self.interval] - _log_denominator(H, eta_s, eta_l)
        return np.where(delta == 1, event_part, 0.0) + _log_survival_from_H(H, eta_s, eta_l)

    def loglik(self, x) -> float:
        return float(np.sum(self.subject_loglik(x)))

    def _derivatives(self, x):
        """d loglik_i / d(eta_s, eta_l, H0) for every subject, plus the rates."""
        eta_s, eta_l, log_rates, H = self._pieces(x)
        delta = self.data.status.astype(float)
        logF0 = _log_F0(H)
        log_den = _log_denominator(H, eta_s, eta_l)
        # share of lam*F0 in the denominator
        w = np.exp(eta_s + logF0 - log_den)
        u = (eta_s - eta_l) + H + logF0
        log_sig = -np.logaddexp(0.0, -u)
        # products with theta go through logs so theta -> 0 or inf cannot give inf*0
        theta_sig = np.exp(eta_l + log_sig)
        theta_gap = np.exp(eta_l + _log_softplus_minus_expit(u))

        d_eta_s = delta * (1.0 - w) - theta_sig
        d_eta_l = delta * w - theta_gap
        d_H = -delta * (np.exp(eta_s - H - log_den) - np.exp(eta_l - H - log_den)) - np.exp(
            eta_l + log_sig - logF0
        )
        return d_eta_s, d_eta_l, d_H, np.exp(log_rates)

    def subject_scores(self, x) -> np.ndarray:
        """Per-subject gradient contributions, shape (n, 2p + m)."""
        d_eta_s, d_eta_l, d_H, rates = self._derivatives(x)
        Z = self.data.covariates
        d_log_rates = d_H[:, None] * self.exposure * rates[None, :]
        d_log_rates[np.arange(self.data.n), self.interval] += self.data.status
        return np.hstack([Z * d_eta_s[:, None], Z * d_eta_l[:, None], d_log_rates])

    def gradient(self, x) -> np.ndarray:
        d_eta_s, d_eta_l, d_H, rates = self._derivatives(x)
        Z = self.data.covariates
        g_rates = self.events_per_interval + rates * (self.exposure.T @ d_H)
        return np.concatenate([Z.T @ d_eta_s, Z.T @ d_eta_l, g_rates])


def _terms(grid: TimeGrid, data: SurvivalData, terms: LikelihoodTerms | None) -> LikelihoodTerms:
    if terms is not None:
        return terms
    return LikelihoodTerms(data, grid)


def log_likelihood(params, grid: TimeGrid, data: SurvivalData, terms: LikelihoodTerms | None = None) -> float:
    """Full log-likelihood of right-censored data under the model.

    ``params`` is a ParameterVector or its packed array.
    """
    params = _coerce_params(params, data.p)
    if params.p != data.p:
        raise ValueError(f"parameters have p={params.p}, data has p={data.p}")
    return _terms(grid, data, terms).loglik(params.pack())


def log_likelihood_gradient(
    params, grid: TimeGrid, data: SurvivalData, terms: LikelihoodTerms | None = None
) -> np.ndarray:
    """Analytic gradient with respect to the packed parameters."""
    params = _coerce_params(params, data.p)
    if params.p != data.p:
        raise ValueError(f"parameters have p={params.p}, data has p={data.p}")
    return _terms(grid, data, terms).gradient(params.pack())
