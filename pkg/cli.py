# cli.py - the phidep command line: estimate, fit, simulate, rolling,
# contagion and validate, writing JSON (or CSV) artifacts
import argparse
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import pandas as pd
from scipy.special import ndtri

from config import (
    DEFAULT_ALPHA,
    DEFAULT_MC_SAMPLES,
    GENERAL_PHI_MC_BUDGET,
    LOG_FORMAT,
    VERSION,
    default_seed,
    load_config,
)
from copula_models import sample as sample_model
from errors import NumericalError, ValidationError
from gaussian_phi import estimate_gaussian
from grouped_data import MISSING_POLICIES, TIE_POLICIES, normal_scores_correlation, read_grouped_csv
from inference import contagion_analysis, rolling_dependence, rolling_pairwise
from mc_estimator import GENERAL, HELLINGER_REDUCED, estimate_from_data
from model_spec import parse_model
from phi_functions import PhiKind, normalize, parse_phi
from pseudo_mle import FIT_FAMILIES, bootstrap_covariance, fit_pseudo_mle, make_template
from validation import SampleValidator

logger = logging.getLogger(__name__)

COMMANDS = ("estimate", "fit", "simulate", "rolling", "contagion", "validate")
COPULAS = ("gaussian",) + FIT_FAMILIES
FORMATS = ("json", "csv")


@dataclass
class RunConfig:
    command: str
    input: str = None
    groups: str = None
    copula: str = None
    phi: str = "mutual-information"
    alpha: float = DEFAULT_ALPHA
    seed: int = None
    mc_samples: int = None
    out: str = None
    format: str = "json"
    threads: int = None
    ties: str = "strict"
    missing: str = "drop-row"
    log_returns: bool = False
    hellinger_form: str = "reduced"
    bootstrap: int = 0
    m: int = 1000
    scale: str = "uniform"
    window: int = None
    step: int = 1
    pairwise: bool = False
    period1: str = None
    period2: str = None
    period3: str = None
    reproducible: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.seed is None:
            self.seed = default_seed()
        if self.format not in FORMATS:
            raise ValidationError(f"unknown format {self.format!r}")
        if self.ties not in TIE_POLICIES:
            raise ValidationError(f"unknown tie policy {self.ties!r}")
        if self.missing not in MISSING_POLICIES:
            raise ValidationError(f"unknown missing-value policy {self.missing!r}")
        if self.command != "simulate" and self.input is None:
            raise ValidationError(f"{self.command} needs --input")
        if self.command not in ("simulate",) and self.groups is None:
            raise ValidationError(f"{self.command} needs --groups")

    @property
    def periods(self):
        return [self.period1, self.period2, self.period3]


# ============================================================================
# ARGUMENTS
# ============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="CSV with one column per variable (optional leading date column)")
    common.add_argument("--groups", help="group sizes, e.g. 2,2")
    common.add_argument("--phi", help="mutual-information, pearson, hellinger, total-variation, jensen-shannon, power:A")
    common.add_argument("--alpha", type=float, help="confidence level parameter (default 0.05)")
    common.add_argument("--seed", type=int, help="random seed (default $PHIDEP_SEED or a fixed constant)")
    common.add_argument("--threads", type=int, help="worker threads (default: logical cores)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=FORMATS)
    common.add_argument("--config", help="TOML file of option defaults; flags override it")
    common.add_argument("--ties", choices=TIE_POLICIES)
    common.add_argument("--missing", choices=MISSING_POLICIES)
    common.add_argument("--log-returns", action="store_true", default=None, help="convert prices to log-returns")
    common.add_argument("--reproducible", action="store_true", default=None, help="omit wall-clock from provenance")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings and errors only")

    parser = argparse.ArgumentParser(prog="phidep", description="Phi-divergence dependence between groups of variables")
    parser.add_argument("--version", action="version", version=f"phidep {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", parents=[common], help="plug-in dependence estimate")
    p.add_argument("--copula", choices=COPULAS)
    p.add_argument("--mc-samples", type=int, help="Monte Carlo draws")
    p.add_argument("--hellinger-form", choices=("reduced", "general"))
    p.add_argument("--bootstrap", type=int, help="bootstrap resamples for the parameter covariance")

    p = sub.add_parser("fit", parents=[common], help="pseudo-likelihood copula fit")
    p.add_argument("--copula", choices=COPULAS)
    p.add_argument("--bootstrap", type=int)

    p = sub.add_parser("simulate", parents=[common], help="draw a sample from a copula model")
    p.add_argument("--copula", help='model spec, e.g. "gumbel(th=3,d=2)"')
    p.add_argument("--m", type=int, help="number of rows")
    p.add_argument("--scale", choices=("uniform", "normal"))

    p = sub.add_parser("rolling", parents=[common], help="rolling-window Gaussian estimates")
    p.add_argument("--window", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--pairwise", action="store_true", default=None)

    p = sub.add_parser("contagion", parents=[common], help="two-period dependence tests")
    for i in (1, 2, 3):
        p.add_argument(f"--period{i}", help="a:b (1-based rows) or YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--pairwise", action="store_true", default=None)

    sub.add_parser("validate", parents=[common], help="check an input CSV")
    return parser


def config_from_args(args):
    """Merge flags over the config file over RunConfig defaults."""
    file_values = load_config(args.config)
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(file_values) - fields)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    values = {k: v for k, v in file_values.items() if k != "command"}
    for name in fields:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    values["command"] = args.command
    return RunConfig(**values)


# ============================================================================
# OUTPUT
# ============================================================================

def _clean(value):
    """JSON-ready copy: numpy to python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def provenance(config):
    out = {
        "version": VERSION,
        "command": config.command,
        "seed": config.seed,
        "config": dataclasses.asdict(config),
    }
    if not config.reproducible:
        out["wall_clock"] = datetime.now(timezone.utc).isoformat()
    return out


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    logger.info("Wrote %s", out)


def write_json(payload, config):
    payload = dict(payload)
    payload["provenance"] = provenance(config)
    _emit(json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n", config.out)


def write_frame(df, config):
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    _emit(buf.getvalue(), config.out)


def _csv_only_for_tables(config):
    if config.format == "csv":
        raise ValidationError("CSV output is available for rolling, contagion and validate; use --format json")


# ============================================================================
# COMMANDS
# ============================================================================

def _load(config):
    return read_grouped_csv(config.input, config.groups, config.missing, config.log_returns)


def cmd_estimate(config):
    _csv_only_for_tables(config)
    phi = parse_phi(config.phi)
    sample = _load(config)
    copula = config.copula or "gaussian"
    if copula not in COPULAS:
        raise ValidationError(f"unknown copula {copula!r}; choose from {', '.join(COPULAS)}")

    if copula == "gaussian":
        m = config.mc_samples or GENERAL_PHI_MC_BUDGET
        result = estimate_gaussian(sample, phi, config.alpha, config.ties, m, config.seed, config.threads)
        payload = {"copula": "gaussian", **result.to_dict(), "correlation": result.r.to_dict()}
        write_json(payload, config)
        return 0

    template = make_template(copula, sample.structure)
    form = GENERAL
    if phi.kind is PhiKind.HELLINGER and config.hellinger_form == "reduced":
        form = HELLINGER_REDUCED
    est = estimate_from_data(sample, template, phi, config.mc_samples or DEFAULT_MC_SAMPLES, config.seed,
                             config.threads, form, config.ties)
    if config.bootstrap:
        est.fit.bootstrap_v = bootstrap_covariance(sample, template, est.fit.theta_hat, config.bootstrap,
                                                   config.seed, config.threads)
    out = est.to_dict()
    out["normalized_value"] = normalize(phi, max(est.value, 0.0))
    payload = {"copula": copula, **out, "model": est.fit.model.describe()}
    write_json(payload, config)
    return 0


def cmd_fit(config):
    _csv_only_for_tables(config)
    sample = _load(config)
    copula = config.copula or "gaussian"
    if copula == "gaussian":
        r = normal_scores_correlation(sample, config.ties)
        write_json({"copula": "gaussian", "correlation": r.to_dict()}, config)
        return 0
    template = make_template(copula, sample.structure)
    fit = fit_pseudo_mle(sample, template, ties=config.ties)
    if config.bootstrap:
        fit.bootstrap_v = bootstrap_covariance(sample, template, fit.theta_hat, config.bootstrap,
                                               config.seed, config.threads)
    write_json({"copula": copula, "fit": fit.to_dict(), "model": fit.model.describe()}, config)
    return 0


def cmd_simulate(config):
    if not config.copula:
        raise ValidationError("simulate needs --copula")
    if config.m < 1:
        raise ValidationError("--m must be >= 1")
    model = parse_model(config.copula, config.groups)
    u = sample_model(model, config.m, config.seed, config.threads)
    if config.scale == "normal":
        u = ndtri(u)
    columns = [f"X{j + 1}" for j in range(u.shape[1])]
    write_frame(pd.DataFrame(u, columns=columns), config)
    return 0


def cmd_rolling(config):
    if config.window is None:
        raise ValidationError("rolling needs --window")
    phi = parse_phi(config.phi)
    sample = _load(config)
    m = config.mc_samples or GENERAL_PHI_MC_BUDGET
    args = (config.window, config.step, phi, config.alpha, config.ties, m, config.seed, config.threads)
    series = rolling_pairwise(sample, *args) if config.pairwise else [rolling_dependence(sample, *args)]
    if config.format == "csv":
        frames = []
        for s in series:
            df = s.to_frame()
            df.insert(0, "groups", "-".join(str(g) for g in s.groups) or "all")
            frames.append(df)
        write_frame(pd.concat(frames, ignore_index=True), config)
        return 0
    write_json({"series": [s.to_dict() for s in series]}, config)
    return 0


def cmd_contagion(config):
    if None in config.periods:
        raise ValidationError("contagion needs --period1, --period2 and --period3")
    phi = parse_phi(config.phi)
    sample = _load(config)
    m = config.mc_samples or GENERAL_PHI_MC_BUDGET
    report = contagion_analysis(sample, config.periods, phi, config.alpha, bool(config.pairwise), config.ties,
                                m, config.seed, config.threads)
    if config.format == "csv":
        rows = [{
            "groups": "-".join(str(g) for g in entry["groups"]),
            "d1": entry["periods"][0]["estimate"]["value"],
            "d2": entry["periods"][1]["estimate"]["value"],
            "d3": entry["periods"][2]["estimate"]["value"],
            "z12": entry["p12"]["z"], "p12": entry["p12"]["p_value"],
            "z23": entry["p23"]["z"], "p23": entry["p23"]["p_value"],
        } for entry in report]
        write_frame(pd.DataFrame(rows), config)
        return 0
    write_json({"phi": phi.label, "tests": report}, config)
    return 0


def cmd_validate(config):
    validator = SampleValidator(config.input, config.groups, config.missing, config.log_returns)
    validator.load_data()
    validator.verify_data()
    if config.format == "csv":
        write_frame(validator.issues_frame(), config)
    else:
        write_json(validator.generate_report(), config)
    if not validator.ok:
        raise ValidationError(validator.issues["error"][0]["message"])
    return 0


HANDLERS = {
    "estimate": cmd_estimate,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "rolling": cmd_rolling,
    "contagion": cmd_contagion,
    "validate": cmd_validate,
}


def run(config):
    """Execute one command; raises PhidepError subclasses on failure."""
    logger.info("phidep %s (seed %d)", config.command, config.seed)
    return HANDLERS[config.command](config)


def _setup_logging(args):
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args)
    try:
        return run(config_from_args(args))
    except NumericalError as exc:
        print(f"phidep: error: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, FileNotFoundError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        print(f"phidep: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
