# pseudo_mle.py - semi-parametric copula fitting by pseudo log-likelihood with
# rank-based margins, staged starts for nested families and a row bootstrap
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as so

from config import DEFAULT_BOOTSTRAP, DEFAULT_SEED, NM_MAXITER, NM_XATOL
from copula_models import ArchimedeanCopula, ArchimedeanGenerator, NestedArchimedeanCopula
from errors import GroupStructureError, PhidepError, ValidationError
from grouped_data import GroupStructure, GroupedSample, ranks
from parallel import map_ordered, spawn_rngs

logger = logging.getLogger(__name__)

FIT_FAMILIES = ("gumbel", "clayton", "nested-gumbel", "nested-clayton")
CHILD_START = 2.0
ROOT_START = {"gumbel": 2.0, "clayton": 0.1}


@dataclass
class FitResult:
    theta_hat: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    start: np.ndarray
    model: object = None
    bootstrap_v: np.ndarray = None
    messages: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "family": self.model.name if self.model is not None else None,
            "start": [float(s) for s in self.start],
            "theta_hat": [float(t) for t in self.theta_hat],
            "loglik": float(self.loglik),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }
        if self.bootstrap_v is not None:
            out["bootstrap_V"] = np.asarray(self.bootstrap_v).tolist()
        return out


# ============================================================================
# PSEUDO-OBSERVATIONS AND TEMPLATES
# ============================================================================

def pseudo_observations(sample, ties="strict"):
    """rank / (n + 1) per column, strictly inside (0, 1)."""
    data = sample.data if isinstance(sample, GroupedSample) else np.asarray(sample, dtype=float)
    n = data.shape[0]
    if n < 2:
        raise ValidationError("pseudo-observations need n >= 2")
    return np.column_stack([ranks(data[:, j], ties) for j in range(data.shape[1])]) / (n + 1.0)


def make_template(family, structure):
    """Fitting template with the default starting parameters."""
    structure = GroupStructure.parse(structure)
    family = str(family).lower()
    if family not in FIT_FAMILIES:
        raise ValidationError(f"unknown fit family {family!r}; choose from {', '.join(FIT_FAMILIES)}")
    if not family.startswith("nested-"):
        return ArchimedeanCopula(ArchimedeanGenerator(family, CHILD_START), structure)
    base = family[len("nested-"):]
    if structure.k < 2:
        raise GroupStructureError("nested fitting needs at least two groups")
    if min(structure.sizes) < 2:
        raise GroupStructureError("nested fitting needs every group to have at least two columns")
    root = ArchimedeanGenerator(base, min(ROOT_START[base], CHILD_START))
    children = [(ArchimedeanGenerator(base, CHILD_START), d) for d in structure.sizes]
    return NestedArchimedeanCopula(root, children)


def pseudo_loglik(model, u):
    return float(math.fsum(model.log_density(u)))


# ============================================================================
# OPTIMIZATION
# ============================================================================

def _project(template, theta):
    """Clip into the box and enforce theta0 <= min child theta for nested models."""
    theta = np.array(theta, dtype=float)
    for i, (lo, hi) in enumerate(template.bounds()):
        theta[i] = min(max(theta[i], lo), hi)
    if isinstance(template, NestedArchimedeanCopula):
        theta[0] = min(theta[0], theta[1:].min())
    return theta


class _Tracker:
    """Objective wrapper remembering the best candidate seen."""

    def __init__(self, template, u):
        self.template = template
        self.u = u
        self.best_theta = None
        self.best_loglik = -math.inf
        self.calls = 0

    def loglik(self, theta):
        theta = _project(self.template, theta)
        self.calls += 1
        try:
            value = pseudo_loglik(self.template.with_parameters(theta), self.u)
        except (PhidepError, FloatingPointError):
            value = -math.inf
        if not math.isfinite(value):
            value = -math.inf
        if value > self.best_loglik:
            self.best_loglik, self.best_theta = value, theta
        return value

    def __call__(self, theta):
        value = self.loglik(np.atleast_1d(theta))
        return -value if math.isfinite(value) else 1e300


def fit_pseudo_mle(sample, template, starts=None, ties="strict", u=None):
    """Maximize the pseudo log-likelihood over admissible parameters."""
    if not template.density_available:
        raise ValidationError(f"{template.name} density is unavailable for q={template.q}")
    if u is None:
        if sample.q != template.q:
            raise GroupStructureError(f"template covers {template.q} columns, sample has {sample.q}")
        u = pseudo_observations(sample, ties)
    if starts is None:
        starts = staged_starts(sample, template, ties, u=u) if isinstance(template, NestedArchimedeanCopula) \
            else template.parameters()
    start = _project(template, starts)
    tracker = _Tracker(template, u)
    start_loglik = tracker.loglik(start)
    bounds = template.bounds()

    with np.errstate(all="ignore"):
        if len(start) == 1:
            res = so.minimize_scalar(tracker, bounds=bounds[0], method="bounded",
                                     options={"xatol": NM_XATOL, "maxiter": NM_MAXITER})
            tracker.loglik(np.atleast_1d(res.x))
            iterations = int(res.get("nit", res.nfev))
        else:
            res = so.minimize(tracker, start, method="Nelder-Mead", bounds=bounds,
                              options={"xatol": NM_XATOL, "fatol": math.inf, "maxiter": NM_MAXITER})
            tracker.loglik(res.x)
            iterations = int(res.nit)
    converged = bool(res.success)

    theta_hat = tracker.best_theta if tracker.best_theta is not None else start
    loglik = max(tracker.best_loglik, start_loglik)
    messages = []
    if not converged:
        messages.append(str(res.message))
        logger.warning("%s fit did not converge after %d iterations", template.name, iterations)
    else:
        logger.info("%s fit converged: theta=%s loglik=%.4f", template.name,
                    np.array2string(theta_hat, precision=4), loglik)
    return FitResult(theta_hat, loglik, iterations, converged, start,
                     template.with_parameters(theta_hat), messages=messages)


def staged_starts(sample, template, ties="strict", u=None):
    """Child parameters from marginal fits, then the root default projected below them."""
    if not isinstance(template, NestedArchimedeanCopula):
        raise ValidationError("staged starts apply to nested templates only")
    if u is None:
        u = pseudo_observations(sample, ties)
    family = template.family
    child_hats = []
    for (_, d), sl in zip(template.children, template.structure.slices):
        child = ArchimedeanCopula(ArchimedeanGenerator(family, CHILD_START), GroupStructure((d,)))
        fit = fit_pseudo_mle(None, child, starts=[CHILD_START], u=u[:, sl])
        child_hats.append(float(fit.theta_hat[0]))
    root = min(ROOT_START[family], min(child_hats))
    logger.info("Staged starts: root %.4f, children %s", root, ", ".join(f"{t:.4f}" for t in child_hats))
    return np.array([root] + child_hats)


def bootstrap_covariance(sample, template, theta_hat, n_boot=DEFAULT_BOOTSTRAP, seed=DEFAULT_SEED, threads=None):
    """Covariance of theta-hat over row resamples (midrank pseudo-observations)."""
    if n_boot < 2:
        raise ValidationError("bootstrap needs at least 2 resamples")
    rngs = spawn_rngs(seed, n_boot)
    start = np.asarray(theta_hat, dtype=float)

    def one(rng):
        rows = rng.integers(0, sample.n, sample.n)
        u = pseudo_observations(sample.data[rows], ties="midrank")
        return fit_pseudo_mle(None, template, starts=start, u=u).theta_hat

    draws = np.array(map_ordered(one, rngs, threads))
    logger.info("Bootstrap covariance from %d resamples", n_boot)
    return np.atleast_2d(np.cov(draws, rowvar=False))
