# inference.py - studentized replicates, contagion z-tests and rolling-window
# dependence series for Gaussian-copula plug-in estimates
import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy import stats
from scipy.stats import norm

from config import DEFAULT_ALPHA, DEFAULT_SEED, GENERAL_PHI_MC_BUDGET
from copula_models import GaussianCopula
from errors import (
    InfiniteEstimateError,
    InsufficientSampleError,
    NumericalError,
    ValidationError,
)
from gaussian_phi import estimate_gaussian, gaussian_dependence
from grouped_data import BlockCorrelationMatrix, GroupStructure, GroupedSample, rolling_windows
from parallel import map_ordered
from phi_functions import json_number

logger = logging.getLogger(__name__)


class Direction(Enum):
    INCREASE_INTO_CRISIS = "increase-into-crisis"
    DECREASE_AFTER_CRISIS = "decrease-after-crisis"


# ============================================================================
# CONTAGION TESTS
# ============================================================================

@dataclass
class ContagionTestResult:
    z: float
    p_value: float
    direction: Direction
    estimates: tuple
    n1: int
    n2: int

    def to_dict(self):
        return {
            "z": self.z,
            "p_value": self.p_value,
            "direction": self.direction.value,
            "n1": self.n1,
            "n2": self.n2,
            "estimates": [e.to_dict() for e in self.estimates],
        }


def contagion_test(est_a, est_b, direction, n_a=None, n_b=None):
    """z = (D1 - D2) / sqrt(zeta1^2/n1 + zeta2^2/n2) with a one-sided normal p-value."""
    direction = Direction(direction)
    n_a = n_a or est_a.n
    n_b = n_b or est_b.n
    for est in (est_a, est_b):
        if est.singular or not math.isfinite(est.value) or est.asymptotic_sd is None:
            raise InfiniteEstimateError("contagion test needs finite estimates with an asymptotic sd")
    if not n_a or not n_b:
        raise ValidationError("sample sizes of both periods are required")
    var = est_a.asymptotic_sd ** 2 / n_a + est_b.asymptotic_sd ** 2 / n_b
    if var <= 0:
        raise ValidationError("both asymptotic standard deviations are zero")
    z = (est_a.value - est_b.value) / math.sqrt(var)
    p = norm.cdf(z) if direction is Direction.INCREASE_INTO_CRISIS else norm.sf(z)
    return ContagionTestResult(float(z), float(p), direction, (est_a, est_b), int(n_a), int(n_b))


def resolve_period(sample, text):
    """'a:b' (1-based inclusive rows) or 'YYYY-MM-DD:YYYY-MM-DD' -> (start, stop) slice bounds."""
    m = re.match(r"^\s*(\d+)\s*:\s*(\d+)\s*$", str(text))
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        if not 1 <= a <= b <= sample.n:
            raise ValidationError(f"period {text} outside rows 1..{sample.n}")
        return a - 1, b
    m = re.match(r"^\s*(\d{4}-\d{2}-\d{2})\s*:\s*(\d{4}-\d{2}-\d{2})\s*$", str(text))
    if not m:
        raise ValidationError(f"cannot parse period {text!r}; use a:b or YYYY-MM-DD:YYYY-MM-DD")
    if sample.row_labels is None:
        raise ValidationError("date periods need a date column in the input")
    dates = pd.to_datetime(pd.Series(sample.row_labels))
    inside = np.flatnonzero((dates >= pd.Timestamp(m.group(1))) & (dates <= pd.Timestamp(m.group(2))))
    if inside.size == 0:
        raise ValidationError(f"no rows fall in period {text}")
    return int(inside[0]), int(inside[-1]) + 1


def group_pairs(k):
    return list(itertools.combinations(range(k), 2))


def contagion_analysis(sample, periods, phi, alpha=DEFAULT_ALPHA, pairwise=False, ties="strict",
                       m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    """Estimates per period and the two tests (into crisis, after crisis) per grouping."""
    if len(periods) != 3:
        raise ValidationError("contagion analysis needs three periods (pre-crisis, crisis, post-crisis)")
    bounds = [resolve_period(sample, p) if isinstance(p, str) else tuple(p) for p in periods]
    groupings = group_pairs(sample.structure.k) if pairwise else [tuple(range(sample.structure.k))]
    report = []
    for groups in groupings:
        sub = sample.select_groups(groups) if pairwise else sample
        ests = [estimate_gaussian(sub.rows(a, b), phi, alpha, ties, m, seed, threads) for a, b in bounds]
        entry = {"groups": [int(g) + 1 for g in groups],
                 "periods": [{"rows": [a + 1, b], "estimate": e.to_dict()} for (a, b), e in zip(bounds, ests)]}
        for key, (e1, e2), direction in (("p12", ests[:2], Direction.INCREASE_INTO_CRISIS),
                                          ("p23", ests[1:], Direction.DECREASE_AFTER_CRISIS)):
            try:
                res = contagion_test(e1, e2, direction)
                entry[key] = {"z": res.z, "p_value": res.p_value}
            except InfiniteEstimateError as exc:
                logger.warning("Groups %s: %s", entry["groups"], exc)
                entry[key] = {"z": None, "p_value": None, "error": str(exc)}
        report.append(entry)
        logger.info("Contagion tests for groups %s done", entry["groups"])
    return report


# ============================================================================
# ROLLING WINDOWS
# ============================================================================

@dataclass
class RollingEntry:
    start_index: int
    label: str
    n: int
    value: float
    sd: float
    ci_lo: float
    ci_hi: float
    singular: bool = False
    short_window: bool = False
    note: str = None


@dataclass
class RollingSeries:
    entries: list
    phi: object
    window: int
    step: int
    alpha: float
    groups: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "phi": self.phi.label,
            "window": self.window,
            "step": self.step,
            "alpha": self.alpha,
            "labels": [e.label for e in self.entries],
            "start_index": [e.start_index for e in self.entries],
            "n": [e.n for e in self.entries],
            "values": [json_number(e.value) for e in self.entries],
            "sd": [json_number(e.sd) for e in self.entries],
            "ci_lo": [json_number(e.ci_lo) for e in self.entries],
            "ci_hi": [json_number(e.ci_hi) for e in self.entries],
            "singular": [e.singular for e in self.entries],
            "short_window": [e.short_window for e in self.entries],
        }
        if self.groups:
            out["groups"] = self.groups
        return out

    def to_frame(self):
        return pd.DataFrame([{
            "label": e.label, "start_index": e.start_index, "n": e.n, "value": e.value, "sd": e.sd,
            "ci_lo": e.ci_lo, "ci_hi": e.ci_hi, "singular": e.singular, "short_window": e.short_window,
        } for e in self.entries])


def rolling_dependence(sample, window, step, phi, alpha=DEFAULT_ALPHA, ties="strict",
                       m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    """Plug-in estimate and confidence interval for every window, labeled by its left bound."""
    if window < sample.q + 2:
        raise InsufficientSampleError(f"window must be >= q + 2 = {sample.q + 2}")
    windows = rolling_windows(sample, window, step)

    def one(item):
        start, sub = item
        label = sample.row_label(start)
        short = sub.n != window
        try:
            est = estimate_gaussian(sub, phi, alpha, ties, m, seed, threads=1)
        except NumericalError as exc:
            logger.warning("Window at %s skipped: %s", label, exc)
            return RollingEntry(start, label, sub.n, math.nan, None, None, None, True, short, str(exc))
        lo, hi = est.ci if est.ci is not None else (None, None)
        return RollingEntry(start, label, sub.n, est.value, est.asymptotic_sd, lo, hi, est.singular, short)

    entries = map_ordered(one, windows, threads)
    flagged = sum(e.singular for e in entries)
    logger.info("Processed %d windows (%d singular)", len(entries), flagged)
    return RollingSeries(entries, phi, window, step, alpha)


def rolling_pairwise(sample, window, step, phi, alpha=DEFAULT_ALPHA, ties="strict",
                     m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    out = []
    for pair in group_pairs(sample.structure.k):
        series = rolling_dependence(sample.select_groups(pair), window, step, phi, alpha, ties, m, seed, threads)
        series.groups = [p + 1 for p in pair]
        out.append(series)
    return out


# ============================================================================
# GAUSSIAN SIMULATION SETTINGS AND REPLICATES
# ============================================================================

def ar1_matrix(q, rho):
    idx = np.arange(q)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def equicorrelated_matrix(q, rho):
    out = np.full((q, q), rho)
    np.fill_diagonal(out, 1.0)
    return out


def gaussian_setting(number):
    """(GaussianCopula, marginal distributions or None) for the four simulation settings."""
    if number in (1, 2, 3):
        rho = 0.8 if number == 3 else 0.25
        model = GaussianCopula(BlockCorrelationMatrix(ar1_matrix(4, rho), GroupStructure((2, 2))))
        marginals = None
        if number == 2:
            marginals = [stats.t(3), stats.expon(), stats.beta(2, 2), stats.f(2, 6)]
        return model, marginals
    if number == 4:
        structure = GroupStructure((4, 5, 3, 1, 2))
        return GaussianCopula(BlockCorrelationMatrix(equicorrelated_matrix(15, 0.5), structure)), None
    raise ValidationError(f"unknown simulation setting {number}")


def _apply_marginals(u, marginals):
    if marginals is None:
        return stats.norm.ppf(u)
    return np.column_stack([dist.ppf(u[:, j]) for j, dist in enumerate(marginals)])


def _replicate(model, phi, n, rep_seed, marginals, m):
    u = model.sample(n, int(rep_seed), threads=1)
    sample = GroupedSample(_apply_marginals(u, marginals), model.structure)
    return estimate_gaussian(sample, phi, m=m, seed=int(rep_seed), threads=1)


def replicate_estimates(model, phi, n, n_reps, seed=DEFAULT_SEED, marginals=None,
                        m=GENERAL_PHI_MC_BUDGET, threads=None):
    """Plug-in estimates and their asymptotic sds over independent samples."""
    if not isinstance(model, GaussianCopula):
        raise ValidationError("replicates follow the Gaussian plug-in path; model must be Gaussian")
    seeds = np.random.SeedSequence(seed).generate_state(n_reps)
    ests = map_ordered(lambda s: _replicate(model, phi, n, s, marginals, m), seeds, threads)
    values = np.array([e.value for e in ests])
    sds = np.array([np.nan if e.asymptotic_sd is None else e.asymptotic_sd for e in ests])
    return values, sds


def studentized_replicates(model, phi, n, n_reps, seed=DEFAULT_SEED, marginals=None,
                           m=GENERAL_PHI_MC_BUDGET, threads=None):
    """sqrt(n) (D_hat - D) / zeta_hat over n_reps samples; singular replicates are dropped."""
    truth, _ = gaussian_dependence(model.r, phi, m, seed)
    values, sds = replicate_estimates(model, phi, n, n_reps, seed, marginals, m, threads)
    keep = np.isfinite(values) & np.isfinite(sds) & (sds > 0)
    if not keep.all():
        logger.warning("Dropped %d singular replicates", int((~keep).sum()))
    return math.sqrt(n) * (values[keep] - truth) / sds[keep]


def empirical_zeta(model, phi, n, n_reps, seed=DEFAULT_SEED, marginals=None, m=GENERAL_PHI_MC_BUDGET,
                   threads=None):
    """sqrt(n) * SD of the replicate estimates."""
    values, _ = replicate_estimates(model, phi, n, n_reps, seed, marginals, m, threads)
    values = values[np.isfinite(values)]
    return math.sqrt(n) * float(np.std(values, ddof=1))
