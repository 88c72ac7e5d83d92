"""Command-line interface: ``yppe fit | crossing | simulate | mc | km | check-report``.

Errors exit nonzero and print ``error: <category>: <detail>`` as the first
line on stderr. Exit codes are listed in EXIT_CODES.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import report as reportlib
from .baseline import TimeGrid, build_grid_per_event, build_grid_sqrt_n
from .crossing import find_crossing
from .data import DatasetError, SurvivalData, format_dataset, read_dataset
from .inference import FitConfig, FitResult, fit
from .model import ParameterVector
from .nonparam import kaplan_meier
from .simulate import (
    GRID_RULES,
    CalibrationError,
    SimDesign,
    calibrate_tau,
    default_workers,
    generate_dataset,
    run_monte_carlo,
)

EXIT_CODES = {
    "runtime": 1,
    "usage": 2,
    "parse": 3,
    "nonconvergence": 4,
    "singular": 5,
    "config": 6,
    "check": 7,
}

CONFIG_REQUIRED = ("n", "true_psi", "true_phi", "covariates")
CONFIG_OPTIONAL = {
    "weibull_alpha": 1.5,
    "weibull_gamma": 0.05,
    "target_censoring": 0.30,
    "seed": 0,
    "grid_rule": "per-event",
}


class CliError(Exception):
    def __init__(self, category: str, detail: str):
        self.category = category
        self.detail = detail
        super().__init__(f"{category}: {detail}")


def _write(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _load_data(path: str) -> SurvivalData:
    try:
        return read_dataset(path)
    except FileNotFoundError:
        raise CliError("parse", f"{path}: no such file") from None
    except DatasetError as exc:
        raise CliError("parse", str(exc)) from None


def _parse_cuts(text: str) -> TimeGrid:
    try:
        return TimeGrid(tuple(float(v) for v in text.split(",") if v.strip()))
    except ValueError as exc:
        raise CliError("usage", f"--cuts: {exc}") from None


def _grid_for(data: SurvivalData, rule: str, cuts: str | None) -> tuple[TimeGrid, str]:
    if cuts is not None:
        return _parse_cuts(cuts), "explicit"
    builders = {"per-event": build_grid_per_event, "sqrt-n": build_grid_sqrt_n}
    try:
        return builders[rule](data), rule
    except ValueError as exc:
        raise CliError("parse", f"cannot build {rule} grid: {exc}") from None


def _parse_profile(text: str, p: int) -> np.ndarray:
    try:
        z = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliError("usage", f"profile {text!r} is not a comma-separated list of numbers") from None
    if z.size != p:
        raise CliError("usage", f"profile {text!r} has {z.size} values, model has {p} covariates")
    return z


def _default_profiles(data: SurvivalData) -> list[np.ndarray]:
    if data.p == 1 and set(np.unique(data.covariates[:, 0])) <= {0.0, 1.0}:
        return [np.array([0.0]), np.array([1.0])]
    return [np.zeros(data.p)]


def _fit_config(args) -> FitConfig:
    return FitConfig(max_iterations=args.max_iterations, gradient_tolerance=args.gradient_tolerance)


def _run_fit(data: SurvivalData, grid: TimeGrid, config: FitConfig) -> FitResult:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit(data, grid, config)


def format_coefficients(result: FitResult) -> str:
    lines = [f"{'par':<16}{'est':>10}{'se':>10}{'lower':>10}{'upper':>10}{'z':>9}{'p':>8}"]
    for r in result.summary or []:
        lines.append(
            f"{r.name:<16}{r.estimate:>10.3f}{r.se:>10.3f}{r.lower:>10.3f}{r.upper:>10.3f}"
            f"{r.z:>9.3f}{r.p_value:>8.3f}"
        )
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    data = _load_data(args.data)
    grid, rule = _grid_for(data, args.grid, args.cuts)
    result = _run_fit(data, grid, _fit_config(args))
    rep = reportlib.build_report(result, str(args.data), rule)
    _write(reportlib.dumps(rep), args.output)
    if args.curves:
        profiles = [_parse_profile(s, data.p) for s in args.profile] or _default_profiles(data)
        Path(args.curves).write_text(
            reportlib.curves_csv(result.estimates, grid, profiles, result.max_time)
        )
    if args.output not in (None, "-"):
        sys.stdout.write(f"grid: {rule}, m={grid.m}\nloglik: {result.loglik:.6f}\n")
        sys.stdout.write(format_coefficients(result))
    if not result.converged:
        raise CliError(
            "nonconvergence",
            f"{args.data}: BFGS stopped after {result.iterations} iterations ({result.message}); "
            f"gradient max-norm {result.gradient_max_norm:.3g}",
        )
    if result.covariance is None:
        raise CliError("singular", f"{args.data}: observed information matrix is singular")
    return 0


def cmd_crossing(args) -> int:
    if args.report:
        rep = reportlib.load_report(args.report)
        params, grid = reportlib.report_parameters(rep)
        names = tuple(rep["model"]["covariates"])
        max_time = rep["data"].get("max_time")
        result = FitResult(
            estimates=params, loglik=rep["loglik"], covariance=None, converged=True,
            iterations=0, grid=grid, covariate_names=names,
            gradient=np.zeros(2 * params.p + params.m), max_time=max_time,
        )
    else:
        data = _load_data(args.data)
        grid, _ = _grid_for(data, args.grid, args.cuts)
        result = _run_fit(data, grid, _fit_config(args))
        if not result.converged:
            raise CliError("nonconvergence", f"{args.data}: fit did not converge ({result.message})")
    p = result.estimates.p
    z1 = _parse_profile(args.z1, p)
    z2 = _parse_profile(args.z2, p)
    try:
        cr = find_crossing(result, result.grid, z1, z2, horizon=args.horizon)
    except ValueError as exc:
        raise CliError("usage", str(exc)) from None

    out = io.StringIO()
    out.write(f"z1: {args.z1}\nz2: {args.z2}\nhorizon: {cr.search_horizon:.10g}\n")
    if cr.found:
        out.write(f"crossing_time: {cr.crossing_time:.10g}\n")
        out.write(f"bracket: {cr.bracket[0]:.10g},{cr.bracket[1]:.10g}\n")
        out.write(f"difference_at_root: {cr.difference_at_root:.3e}\n")
    elif result.max_time is not None and cr.search_horizon < result.max_time:
        out.write(f"crossing_time: NA\nstatus: no crossing within horizon {cr.search_horizon:g}\n")
    else:
        out.write("crossing_time: NA\nstatus: no crossing detected\n")
    _write(out.getvalue(), None)

    if args.curves:
        Path(args.curves).write_text(
            reportlib.curves_csv(result.estimates, result.grid, [z1, z2], cr.search_horizon / 1.05)
        )
    return 0


def load_design(path: str) -> tuple[SimDesign, str]:
    """Read a JSON design file; returns the design and its grid rule."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError("config", f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise CliError("config", f"{path}: top level must be an object")
    unknown = sorted(set(raw) - set(CONFIG_REQUIRED) - set(CONFIG_OPTIONAL))
    if unknown:
        raise CliError("config", f"{path}: unknown key(s) {', '.join(unknown)}")
    missing = [k for k in CONFIG_REQUIRED if k not in raw]
    if missing:
        raise CliError("config", f"{path}: missing key(s) {', '.join(missing)}")
    values = {**CONFIG_OPTIONAL, **raw}
    if values["grid_rule"] not in GRID_RULES:
        raise CliError("config", f"{path}: grid_rule must be one of {sorted(GRID_RULES)}")
    for key in ("true_psi", "true_phi", "covariates"):
        if not isinstance(values[key], list):
            raise CliError("config", f"{path}: '{key}' must be a list")
    try:
        design = SimDesign(
            n=values["n"],
            true_psi=tuple(values["true_psi"]),
            true_phi=tuple(values["true_phi"]),
            covariate_spec=tuple(values["covariates"]),
            weibull_alpha=values["weibull_alpha"],
            weibull_gamma=values["weibull_gamma"],
            target_censoring=values["target_censoring"],
            seed=values["seed"],
        )
    except (TypeError, ValueError) as exc:
        raise CliError("config", f"{path}: {exc}") from None
    return design, values["grid_rule"]


def _calibrate(design: SimDesign) -> float:
    try:
        return calibrate_tau(design)
    except CalibrationError as exc:
        raise CliError("config", str(exc)) from None


def cmd_simulate(args) -> int:
    design, _ = load_design(args.config)
    tau = _calibrate(design)
    data = generate_dataset(design, tau)
    _write(format_dataset(data), args.output)
    return 0


def cmd_mc(args) -> int:
    design, rule = load_design(args.config)
    if args.grid_rule:
        rule = args.grid_rule
    if args.replications < 1:
        raise CliError("config", f"replications must be >= 1, got {args.replications}")
    workers = args.threads if args.threads is not None else default_workers()
    if workers < 1:
        raise CliError("usage", "--threads must be >= 1")
    tau = _calibrate(design)
    try:
        summary = run_monte_carlo(design, args.replications, rule, workers=workers, tau=tau)
    except RuntimeError as exc:
        raise CliError("nonconvergence", str(exc)) from None
    _write(summary.to_csv(), args.output)
    return 0


def cmd_km(args) -> int:
    data = _load_data(args.data)
    stratum = None
    if args.stratum:
        name, sep, value = args.stratum.partition("=")
        if not sep:
            raise CliError("usage", "--stratum must look like COLUMN=VALUE")
        try:
            stratum = (name.strip(), float(value))
        except ValueError:
            raise CliError("usage", f"--stratum value {value!r} is not numeric") from None
    try:
        km = kaplan_meier(data, stratum)
    except ValueError as exc:
        raise CliError("parse", str(exc)) from None
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["time", "survival", "at_risk", "events"])
    for t, s, r, d in zip(km.event_times, km.survival_values, km.n_at_risk, km.n_events):
        writer.writerow([f"{t:.10g}", f"{s:.10g}", int(r), int(d)])
    _write(out.getvalue(), args.output)
    return 0


def cmd_check_report(args) -> int:
    try:
        rep = reportlib.load_report(args.report)
    except (FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        raise CliError("parse", f"{args.report}: {exc}") from None
    data_path = args.data or rep["data"]["source"]
    data = _load_data(data_path)
    try:
        ok, recorded, recomputed = reportlib.check_report(rep, data)
    except ValueError as exc:
        raise CliError("check", str(exc)) from None
    if not ok:
        raise CliError("check", f"recorded loglik {recorded!r} but recomputed {recomputed!r}")
    sys.stdout.write(f"ok: loglik {recomputed:.10f}\n")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="yppe", description="YP hazard-ratio model with a piecewise-exponential baseline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fit_options(p):
        p.add_argument("--grid", choices=("per-event", "sqrt-n"), default="per-event")
        p.add_argument("--cuts", help="explicit comma-separated cut points (overrides --grid)")
        p.add_argument("--max-iterations", type=int, default=500)
        p.add_argument("--gradient-tolerance", type=float, default=1e-6)

    p = sub.add_parser("fit", help="fit the model and write a JSON report")
    p.add_argument("data")
    fit_options(p)
    p.add_argument("-o", "--output", help="report path (default: stdout)")
    p.add_argument("--curves", help="write sampled S(t|z), h(t|z) to this CSV")
    p.add_argument("--profile", action="append", default=[], help="covariate profile for --curves, e.g. 1 or 1,0.5")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("crossing", help="time at which two fitted survival curves cross")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--report")
    fit_options(p)
    p.add_argument("--z1", required=True)
    p.add_argument("--z2", required=True)
    p.add_argument("--horizon", type=float)
    p.add_argument("--curves", help="write sampled curves for both profiles to this CSV")
    p.set_defaults(func=cmd_crossing)

    p = sub.add_parser("simulate", help="draw one dataset from a design file")
    p.add_argument("config")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo study from a design file")
    p.add_argument("config")
    p.add_argument("-r", "--replications", type=int, required=True)
    p.add_argument("--grid-rule", choices=sorted(GRID_RULES))
    p.add_argument("--threads", type=int, help="worker processes (default: $YPPE_THREADS or CPU count)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("km", help="Kaplan-Meier step function as CSV")
    p.add_argument("data")
    p.add_argument("--stratum", help="COLUMN=VALUE filter")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("check-report", help="re-evaluate a report's log-likelihood")
    p.add_argument("report")
    p.add_argument("--data", help="dataset path (default: the one recorded in the report)")
    p.set_defaults(func=cmd_check_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc.category}: {exc.detail}\n")
        return EXIT_CODES[exc.category]
    except Exception as exc:  # noqa: BLE001 - last-resort handler keeps the error format
        sys.stderr.write(f"error: runtime: {type(exc).__name__}: {exc}\n")
        return EXIT_CODES["runtime"]


if __name__ == "__main__":
    sys.exit(main())
