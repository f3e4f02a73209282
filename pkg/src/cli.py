"""
Command-line front end: fit dispersion regressions, report skewness of the
estimators, run simulation studies, evaluate Edgeworth densities and list the
family catalog.

Exit status: 0 success, 1 usage or output error, 2 data or domain error, 3 non-convergence.
"""

import argparse
import csv
import json
import logging
import os
from pathlib import Path
import sys
from typing import Dict, List, Optional, Sequence, Tuple

from dotenv import dotenv_values
import numpy as np

from managers.fit_manager import FitManager
from managers.study_manager import StudyManager
from models.errors import ConfigError, ConvergenceError, DispersionError, DomainError
from models.fit import FitOptions, FitResult
from models.predictor import identifiers, parse
from models.report import SkewnessReport
from models.study import StudyConfig, parse_hyper
from stat_utils.catalog import FAMILY_IDS, LINK_IDS, family_capabilities, make_family, make_link
from stat_utils.skewness import edgeworth_pdf, report_for_fit, skewness_report
from stat_utils.specfun import std_normal_pdf

logger = logging.getLogger("dmskew")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_CONVERGED = 3

# representative ids for families that need a hyperparameter
CATALOG_LISTING = (
    "normal", "poisson", "binomial", "gamma", "inverse_gaussian", "ghs",
    "negative_binomial", "tweedie(1.5)", "exp_variance(1)", "reciprocal_gamma",
    "log_gamma", "reciprocal_inverse_gaussian", "von_mises", "const_cv_normal(0.5)",
    "const_cv_ig(0.5)", "const_cv_lognormal(0.5)", "const_cv_weibull(2)",
)

_MODEL_KEYS = (
    "family", "link", "predictor", "parameters", "family_hyper", "data", "response",
    "out", "phi", "beta_init", "max_iter",
)
_SKEW_KEYS = _MODEL_KEYS + ("svg", "beta_true", "phi_true")


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="dmskew", description="Skewness of MLEs in dispersion regression models")
    sub = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    sub.required = True

    def model_arguments(p: argparse.ArgumentParser):
        p.add_argument("--config", help="key=value file; flags win over file values")
        p.add_argument("--family", help=f"family id ({', '.join(FAMILY_IDS)})")
        p.add_argument("--link", help=f"link id ({', '.join(LINK_IDS)})")
        p.add_argument("--predictor", help='predictor expression, e.g. "b0 + b1*x1"')
        p.add_argument("--parameters", help="comma-separated parameter names (default: names not in the data)")
        p.add_argument("--data", help="CSV file with a header row")
        p.add_argument("--response", help="name of the response column")
        p.add_argument("--out", help="output JSON path (default: stdout)")
        p.add_argument("--phi", help="known precision; skips phi estimation")
        p.add_argument("--beta-init", dest="beta_init", help="comma-separated starting values")
        p.add_argument("--max-iter", dest="max_iter", help="maximum scoring iterations")

    fit = sub.add_parser("fit", help="fit a model and write the fit as JSON")
    model_arguments(fit)

    skew = sub.add_parser("skew", help="fit a model and write the skewness report as JSON")
    model_arguments(skew)
    skew.add_argument("--svg", help="write an SVG figure of the Edgeworth densities")
    skew.add_argument("--beta-true", dest="beta_true", help="also evaluate the report at these coefficients")
    skew.add_argument("--phi-true", dest="phi_true", help="precision for the report at the true coefficients")

    simulate = sub.add_parser("simulate", help="run a Monte Carlo study")
    simulate.add_argument("--config", help="key=value study file; flags win over file values")
    simulate.add_argument("--seed", help="64-bit seed")
    simulate.add_argument("--threads", help="worker processes")
    simulate.add_argument("--replications", help="number of replications")
    simulate.add_argument("--n", help="sample size")
    simulate.add_argument("--out", help="CSV path for the study table (default: stdout)")
    simulate.add_argument("--json", help="JSON path for the full study report")

    edgeworth = sub.add_parser("edgeworth", help="print the Edgeworth density on a grid")
    edgeworth.add_argument("--kappa3", required=True, help="standardized third cumulant (skewness)")
    edgeworth.add_argument("--from", dest="start", default="-4", help="grid start (default -4)")
    edgeworth.add_argument("--to", dest="stop", default="4", help="grid end (default 4)")
    edgeworth.add_argument("--points", default="81", help="grid size (default 81)")

    sub.add_parser("families", help="list the family and link catalog")
    return parser


def _settings(args: argparse.Namespace, keys: Sequence[str]) -> Dict[str, str]:
    """Config file values overridden by the flags that were given"""
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        values = {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    return values


def _number(text: str, key: str, kind=float):
    try:
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {text!r}") from None


def _vector(text: str, key: str) -> np.ndarray:
    return np.array([_number(v, key) for v in text.split(",") if v.strip()], dtype=float)


def read_data(path: str, response: str) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Read a comma-separated file with a header row

    Returns:
        (covariate names, n x m covariates, responses)

    Raises:
        ConfigError: Missing file or response column
        DomainError: Ragged row or non-numeric cell
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Data file not found: {path}")
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"Data file is empty: {path}") from None
        rows = [row for row in reader if any(cell.strip() for cell in row)]
    if response not in header:
        raise ConfigError(f"Response column '{response}' not in header {header}")
    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DomainError(f"Row {i + 1} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DomainError(f"Non-numeric value {cell!r} in column '{header[j]}' at row {i + 1}") from None
    r = header.index(response)
    covariates = [h for j, h in enumerate(header) if j != r]
    X = np.delete(values, r, axis=1)
    return covariates, X, values[:, r]


def _require(settings: Dict[str, str], *keys: str):
    missing = [k for k in keys if not settings.get(k)]
    if missing:
        raise ConfigError(f"Missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _build_model(settings: Dict[str, str]):
    _require(settings, "family", "link", "predictor", "data", "response")
    hyper = parse_hyper(settings["family_hyper"]) if settings.get("family_hyper") else None
    family = make_family(settings["family"], hyper)
    link = make_link(settings["link"])
    covariates, X, y = read_data(settings["data"], settings["response"])
    if settings.get("parameters"):
        parameters = [p.strip() for p in settings["parameters"].split(",") if p.strip()]
    else:
        parameters = [name for name in identifiers(settings["predictor"]) if name not in covariates]
    predictor = parse(settings["predictor"], covariates, parameters)
    options = FitOptions(
        beta_init=_vector(settings["beta_init"], "beta_init") if settings.get("beta_init") else None,
        phi_known=_number(settings["phi"], "phi") if settings.get("phi") else None,
        max_iter=_number(settings["max_iter"], "max_iter", int) if settings.get("max_iter") else 100,
    )
    return family, link, predictor, X, y, options


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _write_json(data: dict, out: Optional[str]):
    text = json.dumps(data, indent=2, default=_jsonable) + "\n"
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info(f"Wrote {path}")
    else:
        sys.stdout.write(text)


def _fit(settings: Dict[str, str]):
    family, link, predictor, X, y, options = _build_model(settings)
    fit = FitManager(family, link, predictor, options).fit(X, y)
    return family, link, predictor, X, fit


def _fit_payload(fit: FitResult, predictor) -> dict:
    data = fit.to_dict()
    data["predictor"] = predictor.to_dict()
    return data


def _write_not_converged(error: ConvergenceError, out: Optional[str]) -> int:
    logger.error(f"Did not converge: {error}", exc_info=True)
    _write_json({"converged": False, "diagnostics": error.diagnostics, "message": str(error)}, out)
    sys.stderr.write(f"dmskew: not converged: {error}\n")
    return EXIT_NOT_CONVERGED


def cmd_fit(args: argparse.Namespace) -> int:
    settings = _settings(args, _MODEL_KEYS)
    try:
        _, _, predictor, _, fit = _fit(settings)
    except ConvergenceError as e:
        return _write_not_converged(e, settings.get("out"))
    _write_json(_fit_payload(fit, predictor), settings.get("out"))
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


def cmd_skew(args: argparse.Namespace) -> int:
    settings = _settings(args, _SKEW_KEYS)
    try:
        family, link, predictor, X, fit = _fit(settings)
    except ConvergenceError as e:
        return _write_not_converged(e, settings.get("out"))
    if not fit.converged:
        _write_json({"fit": _fit_payload(fit, predictor)}, settings.get("out"))
        return EXIT_NOT_CONVERGED
    report = report_for_fit(fit, family, link, predictor, X)
    payload = report.to_dict()
    payload["fit"] = _fit_payload(fit, predictor)
    reports = [report]
    if settings.get("beta_true"):
        phi_true = _number(settings["phi_true"], "phi_true") if settings.get("phi_true") else fit.phi_hat
        truth = skewness_report(
            family, link, predictor, X, _vector(settings["beta_true"], "beta_true"), phi_true,
            evaluated_at="truth", phi_inference=fit.phi_estimated,
        )
        payload["truth"] = truth.to_dict()
        reports.append(truth)
    _write_json(payload, settings.get("out"))
    if settings.get("svg"):
        write_edgeworth_svg(reports, settings["svg"])
    return EXIT_OK


def write_edgeworth_svg(reports: List[SkewnessReport], path: str):
    """Edgeworth densities of the standardized estimates against the normal density"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "dmskew"
    matplotlib.rcParams["svg.fonttype"] = "none"
    rows = [(name, g) for name, g in reports[0].estimand_rows() if g is not None]
    grid = np.linspace(-4.0, 4.0, 161)
    fig, axes = plt.subplots(1, len(rows), figsize=(3.2 * len(rows), 3.0), squeeze=False)
    for ax, (name, gamma1) in zip(axes[0], rows):
        density = edgeworth_pdf(gamma1, grid)
        ax.bar(grid, density, width=grid[1] - grid[0], alpha=0.3, color="tab:blue", label="Edgeworth, binned")
        ax.plot(grid, density, color="tab:blue", label="Edgeworth")
        ax.plot(grid, std_normal_pdf(grid), color="black", linestyle="--", label="normal")
        ax.set_title(f"{name}: gamma1={gamma1:.4f}", fontsize=9)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote {out}")


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _settings(args, ("seed", "threads", "replications", "n", "out", "json"))
    if "threads" not in settings and os.getenv("DMSKEW_THREADS"):
        settings["threads"] = os.getenv("DMSKEW_THREADS")
    out = settings.pop("out", None)
    json_path = settings.pop("json", None)
    config = StudyConfig.from_mapping(settings)
    manager = StudyManager(config)
    try:
        report = manager.run_study()
    except ConvergenceError as e:
        return _write_not_converged(e, json_path)
    if out:
        manager.save_report(report, csv_path=out)
    else:
        sys.stdout.write(report.to_csv())
    if json_path:
        manager.save_report(report, json_path=json_path)
    return EXIT_OK


def cmd_edgeworth(args: argparse.Namespace) -> int:
    gamma1 = _number(args.kappa3, "kappa3")
    start, stop = _number(args.start, "from"), _number(args.stop, "to")
    points = _number(args.points, "points", int)
    if points < 2 or not start < stop:
        raise ConfigError("Grid needs at least 2 points and from < to")
    grid = np.linspace(start, stop, points)
    density = edgeworth_pdf(gamma1, grid)
    normal = std_normal_pdf(grid)
    sys.stdout.write("x,density,normal\n")
    for x, d, z in zip(grid, density, normal):
        sys.stdout.write(f"{x:.10g},{d:.10g},{z:.10g}\n")
    return EXIT_OK


def cmd_families(args: argparse.Namespace) -> int:
    sys.stdout.write(f"{'family':<28} {'d-quantities':<13} {'phi-inference':<14} {'sampler':<8}\n")
    for family_id in CATALOG_LISTING:
        caps = family_capabilities(make_family(family_id))
        phi = "fixed" if caps["phi_fixed"] else ("yes" if caps["phi_inference"] else "no")
        sys.stdout.write(
            f"{family_id:<28} {'yes' if caps['d_quantities'] else 'no':<13} {phi:<14} "
            f"{'yes' if caps['sampler'] else 'no':<8}\n"
        )
    sys.stdout.write(f"links: {', '.join(LINK_IDS)}\n")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "skew": cmd_skew,
    "simulate": cmd_simulate,
    "edgeworth": cmd_edgeworth,
    "families": cmd_families,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and map failures to exit codes

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        0 success, 1 usage or output error, 2 data/domain error, 3 non-convergence
    """
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        sys.stderr.write(f"dmskew: error: {e}\n")
        return EXIT_USAGE
    except ConvergenceError as e:
        logger.error(f"Did not converge: {e}", exc_info=True)
        sys.stderr.write(f"dmskew: not converged: {e}\n")
        return EXIT_NOT_CONVERGED
    except DispersionError as e:
        logger.error(f"Command failed: {e}", exc_info=True)
        sys.stderr.write(f"dmskew: error: {e}\n")
        return EXIT_DATA
    except OSError as e:
        logger.error(f"Could not write output: {e}", exc_info=True)
        sys.stderr.write(f"dmskew: error: {e}\n")
        return EXIT_USAGE
