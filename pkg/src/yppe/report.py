"""JSON fit reports and curve exports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .baseline import TimeGrid
from .data import SurvivalData
from .inference import FitResult, rate_summary
from .model import ParameterVector, conditional_hazard, conditional_survival, log_likelihood

REPORT_VERSION = 1
CURVE_POINTS = 512


def _row_dict(row) -> dict:
    return {
        "name": row.name,
        "estimate": row.estimate,
        "se": row.se,
        "lower": row.lower,
        "upper": row.upper,
        "z": row.z,
        "p_value": row.p_value,
    }


def build_report(fit: FitResult, data_source: str, grid_rule: str) -> dict:
    est = fit.estimates
    report = {
        "version": REPORT_VERSION,
        "data": {"source": data_source, "max_time": fit.max_time},
        "model": {
            "grid_rule": grid_rule,
            "m": fit.grid.m,
            "cuts": list(fit.grid.cuts),
            "covariates": list(fit.covariate_names),
        },
        "estimates": {
            "psi": est.psi.tolist(),
            "phi": est.phi.tolist(),
            "log_rates": est.log_rates.tolist(),
        },
        "loglik": fit.loglik,
        "convergence": {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "gradient_max_norm": fit.gradient_max_norm,
            "message": fit.message,
        },
        "covariance_available": fit.covariance is not None,
        "coefficients": [_row_dict(r) for r in fit.summary] if fit.summary else None,
        "baseline_rates": (
            [_row_dict(r) for r in rate_summary(fit)] if fit.covariance is not None
            else [{"name": f"xi_{k + 1}", "estimate": float(r)} for k, r in enumerate(est.rates)]
        ),
    }
    return report


def dumps(report: dict) -> str:
    # json floats are repr-exact, so reloaded estimates reproduce loglik bit for bit
    return json.dumps(report, indent=2, sort_keys=False, allow_nan=True) + "\n"


def load_report(path: str | Path) -> dict:
    report = json.loads(Path(path).read_text())
    for key in ("model", "estimates", "loglik"):
        if key not in report:
            raise ValueError(f"{path}: report is missing '{key}'")
    return report


def report_parameters(report: dict) -> tuple[ParameterVector, TimeGrid]:
    est = report["estimates"]
    params = ParameterVector(est["psi"], est["phi"], est["log_rates"])
    grid = TimeGrid(tuple(report["model"]["cuts"]))
    if grid.m != params.m:
        raise ValueError("report grid and baseline rates disagree")
    return params, grid


def check_report(report: dict, data: SurvivalData, tolerance: float = 1e-8) -> tuple[bool, float, float]:
    """Re-evaluate the log-likelihood at the recorded estimates.

    Returns ``(ok, recorded, recomputed)``; ``ok`` when they agree to
    ``tolerance * max(1, |recorded|)``.
    """
    params, grid = report_parameters(report)
    if list(data.covariate_names) != list(report["model"]["covariates"]):
        raise ValueError("data covariates do not match the report")
    recorded = float(report["loglik"])
    recomputed = log_likelihood(params, grid, data)
    ok = abs(recorded - recomputed) <= tolerance * max(1.0, abs(recorded))
    return ok, recorded, recomputed


def curve_times(max_time: float, points: int = CURVE_POINTS) -> np.ndarray:
    """Geometric grid over (0, 1.05 * max_time]."""
    hi = 1.05 * max_time
    return np.geomspace(hi * 1e-4, hi, points)


def curves_csv(params: ParameterVector, grid: TimeGrid, profiles, max_time: float, points: int = CURVE_POINTS) -> str:
    """Rows ``profile, t, survival, hazard`` for each covariate profile."""
    pe = params.baseline(grid)
    ts = curve_times(max_time, points)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["profile", "t", "survival", "hazard"])
    for z in profiles:
        label = ";".join(f"{v:g}" for v in np.ravel(z))
        S = conditional_survival(params, pe, z, ts)
        h = conditional_hazard(params, pe, z, ts)
        for t, s, hh in zip(ts, S, h):
            writer.writerow([label, f"{t:.10g}", f"{s:.10g}", f"{hh:.10g}"])
    return out.getvalue()
