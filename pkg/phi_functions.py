# phi_functions.py - divergence generators Phi, their derivatives and normalization
import math
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import xlogy

from errors import DomainError, NonDifferentiableError, SpecParseError

INF = math.inf
LOG2 = math.log(2.0)


class PhiKind(Enum):
    MUTUAL_INFORMATION = "mutual-information"
    PEARSON = "pearson"
    HELLINGER = "hellinger"
    TOTAL_VARIATION = "total-variation"
    JENSEN_SHANNON = "jensen-shannon"
    POWER_ALPHA = "power"


def json_number(x):
    """Floats for JSON output; non-finite values become None."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class PhiFunction:
    kind: PhiKind
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind is PhiKind.POWER_ALPHA and not (self.alpha >= 1.0 and math.isfinite(self.alpha)):
            raise DomainError(f"power alpha must be a finite real >= 1, got {self.alpha}")

    # ------------------------------------------------------------------
    # Limits and labels
    # ------------------------------------------------------------------
    @property
    def label(self):
        if self.kind is PhiKind.POWER_ALPHA:
            return f"power:{self.alpha:g}"
        return self.kind.value

    @property
    def phi_at_zero(self):
        if self.kind is PhiKind.MUTUAL_INFORMATION:
            return 0.0
        if self.kind is PhiKind.JENSEN_SHANNON:
            return LOG2
        return 1.0

    @property
    def phi_star_at_zero(self):
        """lim_{t -> inf} Phi(t) / t."""
        kind = self.kind
        if kind in (PhiKind.MUTUAL_INFORMATION, PhiKind.PEARSON):
            return INF
        if kind is PhiKind.JENSEN_SHANNON:
            return LOG2
        if kind is PhiKind.POWER_ALPHA and self.alpha > 1.0:
            return INF
        return 1.0

    @property
    def max_value(self):
        return self.phi_at_zero + self.phi_star_at_zero

    @property
    def growth_exponent(self):
        """p with Phi(t) = O(t^p) as t grows (up to log factors)."""
        if self.kind is PhiKind.PEARSON:
            return 2.0
        if self.kind is PhiKind.POWER_ALPHA:
            return float(self.alpha)
        return 1.0

    @property
    def closed_form(self):
        return self.kind in (PhiKind.MUTUAL_INFORMATION, PhiKind.HELLINGER)

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------
    def __call__(self, t):
        return evaluate(self, t)

    def from_log(self, log_ratio):
        """Phi(k) evaluated from L = log k, with k = 0 and k = inf as limits."""
        L = np.asarray(log_ratio, dtype=float)
        with np.errstate(over="ignore"):
            k = np.exp(L)
        out = np.full(k.shape, self.phi_at_zero)
        inner = (k > 0) & np.isfinite(k)
        if inner.any():
            out[inner] = evaluate(self, k[inner])
        out[np.isinf(k)] = math.inf
        out[L == 0.0] = 0.0
        return out if out.ndim else float(out)

    def derivative_from_log(self, log_ratio):
        L = np.asarray(log_ratio, dtype=float)
        if self.kind is PhiKind.MUTUAL_INFORMATION:
            out = L + 1.0
        elif self.kind is PhiKind.HELLINGER:
            out = -np.expm1(-0.5 * L)
        elif self.kind is PhiKind.JENSEN_SHANNON:
            out = LOG2 + L - np.logaddexp(L, 0.0)
        else:
            with np.errstate(over="ignore"):
                out = np.asarray(derivative(self, np.exp(np.clip(L, -700.0, 700.0))), dtype=float)
        return out if np.ndim(out) else float(out)

    def perspective(self, log_ratio):
        """Phi(k) / k evaluated from L = log k, elementwise."""
        L = np.asarray(log_ratio, dtype=float)
        kind = self.kind
        with np.errstate(over="ignore", invalid="ignore"):
            if kind is PhiKind.MUTUAL_INFORMATION:
                out = L.copy()
            elif kind is PhiKind.PEARSON:
                out = 4.0 * np.sinh(0.5 * L) ** 2
            elif kind is PhiKind.HELLINGER:
                out = np.expm1(-0.5 * L) ** 2
            elif kind is PhiKind.TOTAL_VARIATION:
                out = np.abs(np.expm1(-L))
            elif kind is PhiKind.JENSEN_SHANNON:
                out = L - (1.0 + np.exp(-L)) * (np.logaddexp(L, 0.0) - LOG2)
            else:
                gap = np.abs(np.expm1(L))
                out = np.where(gap > 0, np.exp(self.alpha * np.log(np.where(gap > 0, gap, 1.0)) - L), 0.0)
        out = np.where(L == 0.0, 0.0, out)
        return out if out.ndim else float(out)


def _as_positive(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr <= 0):
        raise DomainError("Phi is defined for t > 0 only")
    return arr


def _scalar(out):
    return out if np.ndim(out) else float(out)


def evaluate(phi, t):
    """Phi(t) for t > 0, elementwise on arrays."""
    t = _as_positive(t)
    kind = phi.kind
    if kind is PhiKind.MUTUAL_INFORMATION:
        out = xlogy(t, t)
    elif kind is PhiKind.PEARSON:
        out = (t - 1.0) ** 2
    elif kind is PhiKind.HELLINGER:
        out = (np.sqrt(t) - 1.0) ** 2
    elif kind is PhiKind.TOTAL_VARIATION:
        out = np.abs(t - 1.0)
    elif kind is PhiKind.JENSEN_SHANNON:
        out = xlogy(t, t) - (t + 1.0) * (np.log1p(t) - LOG2)
    else:
        out = np.abs(t - 1.0) ** phi.alpha
    out = np.where(t == 1.0, 0.0, out)
    return _scalar(out)


def derivative(phi, t):
    """Phi'(t); total variation (and power 1) has no derivative at t = 1."""
    t = _as_positive(t)
    kind = phi.kind
    if kind is PhiKind.MUTUAL_INFORMATION:
        out = np.log(t) + 1.0
    elif kind is PhiKind.PEARSON:
        out = 2.0 * (t - 1.0)
    elif kind is PhiKind.HELLINGER:
        out = 1.0 - 1.0 / np.sqrt(t)
    elif kind is PhiKind.JENSEN_SHANNON:
        out = np.log(2.0 * t / (t + 1.0))
    else:
        alpha = 1.0 if kind is PhiKind.TOTAL_VARIATION else phi.alpha
        if alpha == 1.0 and np.any(t == 1.0):
            raise NonDifferentiableError(f"{phi.label} is not differentiable at t = 1")
        out = alpha * np.sign(t - 1.0) * np.abs(t - 1.0) ** (alpha - 1.0)
    return _scalar(out)


def normalize(phi, d):
    """Map a divergence value onto [0, 1]."""
    d = float(d)
    if math.isnan(d) or d < 0:
        raise DomainError(f"divergence must be >= 0, got {d}")
    if math.isinf(d):
        return 1.0
    top = phi.max_value
    if math.isfinite(top):
        return min(d / top, 1.0)
    # artificial normalization for generators with unbounded maximum
    return math.sqrt(-math.expm1(-2.0 * d))


_PHI_RE = re.compile(r"^\s*(?P<name>[a-z\-]+)\s*(?::\s*(?P<alpha>[0-9.eE+\-]+))?\s*$")


def parse_phi(text):
    """Parse the CLI spelling, e.g. 'hellinger' or 'power:2'."""
    m = _PHI_RE.match(str(text).lower())
    if not m:
        raise SpecParseError(f"unknown phi {text!r}")
    name, alpha = m.group("name"), m.group("alpha")
    try:
        kind = PhiKind(name)
    except ValueError:
        raise SpecParseError(f"unknown phi {text!r}") from None
    if kind is PhiKind.POWER_ALPHA:
        if alpha is None:
            raise SpecParseError("power phi needs an exponent, e.g. power:2")
        try:
            return PhiFunction(kind, float(alpha))
        except ValueError:
            raise SpecParseError(f"bad power exponent in {text!r}") from None
    if alpha is not None:
        raise SpecParseError(f"{name} takes no parameter")
    return PhiFunction(kind)


MUTUAL_INFORMATION = PhiFunction(PhiKind.MUTUAL_INFORMATION)
PEARSON = PhiFunction(PhiKind.PEARSON)
HELLINGER = PhiFunction(PhiKind.HELLINGER)
TOTAL_VARIATION = PhiFunction(PhiKind.TOTAL_VARIATION)
JENSEN_SHANNON = PhiFunction(PhiKind.JENSEN_SHANNON)
