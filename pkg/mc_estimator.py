# mc_estimator.py - Monte Carlo plug-in Phi-dependence for parametric copulas,
# the variance-reduced Hellinger form and a deterministic low-dimension oracle
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config import DEFAULT_MC_SAMPLES, DEFAULT_SEED, KURTOSIS_WARNING, MAX_ORACLE_DIM, ORACLE_GRID
from copula_models import boundary_rows
from errors import DensityUnavailableError, DimensionError, ValidationError
from grouped_data import GroupedSample
from parallel import map_chunks, map_ordered
from phi_functions import HELLINGER, PhiKind, json_number
from pseudo_mle import fit_pseudo_mle

logger = logging.getLogger(__name__)

GENERAL = "general"
HELLINGER_REDUCED = "hellinger-reduced"


@dataclass
class McDependenceEstimate:
    value: float
    mc_standard_error: float
    m_used: int
    theta_used: np.ndarray
    estimator_form: str
    seed: int
    phi: object = None
    redraws: int = 0
    warnings: list = field(default_factory=list)
    second_moment: float = None
    fit: object = None

    def to_dict(self):
        out = {
            "value": json_number(self.value),
            "phi": self.phi.label if self.phi is not None else None,
            "m_used": int(self.m_used),
            "mc_se": json_number(self.mc_standard_error),
            "estimator_form": self.estimator_form,
            "theta_used": [float(t) for t in np.ravel(self.theta_used)],
            "seed": self.seed,
            "redraws": int(self.redraws),
            "warnings": list(self.warnings),
        }
        if self.fit is not None:
            out["fit"] = self.fit.to_dict()
        return out


# ============================================================================
# SUMMAND MOMENTS
# ============================================================================

def _check_model(model, m):
    if int(m) < 1:
        raise ValidationError("m must be >= 1")
    if not model.density_available:
        raise DensityUnavailableError(f"{model.name} density is unavailable for dimension {model.q}")


def _summand_moments(model, summand, m, seed, threads, track_ratio=False):
    """Raw power sums (1..4) of summand(log_ratio) over m model draws, plus redraws."""

    def chunk(rng, size):
        u = model.draw(rng, size)
        bad = boundary_rows(u)
        redraws = 0
        while bad.any():
            redraws += int(bad.sum())
            u[bad] = model.draw(rng, int(bad.sum()))
            bad = boundary_rows(u)
        log_ratio = model.log_ratio(u)
        s = summand(log_ratio)
        ratio = math.fsum(np.exp(-log_ratio)) if track_ratio else 0.0
        return [math.fsum(s ** p) for p in (1, 2, 3, 4)], redraws, ratio

    parts = map_chunks(chunk, m, seed, threads)
    sums = [math.fsum(p[0][i] for p in parts) for i in range(4)]
    redraws = sum(p[1] for p in parts)
    ratio_sum = math.fsum(p[2] for p in parts)
    return sums, redraws, ratio_sum


def _mean_se_kurtosis(sums, m):
    e1, e2, e3, e4 = (s / m for s in sums)
    var = max(e2 - e1 * e1, 0.0)
    se = math.sqrt(var * m / max(m - 1, 1) / m)
    central4 = e4 - 4 * e1 * e3 + 6 * e1 * e1 * e2 - 3 * e1 ** 4
    kurt = central4 / (var * var) if var > 0 else 0.0
    return e1, se, kurt


def _sqrt_ratio(log_ratio):
    return np.exp(-0.5 * log_ratio)


def _warnings_for(kurt, redraws):
    out = []
    if not math.isfinite(kurt) or kurt > KURTOSIS_WARNING:
        out.append(f"summand kurtosis {kurt:.1f} exceeds {KURTOSIS_WARNING:g}; MC standard error may be unreliable")
    if redraws:
        out.append(f"{redraws} boundary draws were redrawn")
    return out


# ============================================================================
# ESTIMATORS
# ============================================================================

def estimate_phi_mc(model, phi, m=DEFAULT_MC_SAMPLES, seed=DEFAULT_SEED, threads=None):
    """Average of Phi(k)/k over draws from the model, k = c / prod c_i."""
    _check_model(model, m)
    theta = model.parameters()
    if model.factorizes:
        return McDependenceEstimate(0.0, 0.0, int(m), theta, GENERAL, seed, phi)
    sums, redraws, _ = _summand_moments(model, phi.perspective, int(m), seed, threads)
    value, se, kurt = _mean_se_kurtosis(sums, int(m))
    warnings = _warnings_for(kurt, redraws)
    for w in warnings:
        logger.warning(w)
    logger.info("MC %s estimate %.6g (se %.3g, m=%d)", phi.label, value, se, m)
    return McDependenceEstimate(value, se, int(m), theta, GENERAL, seed, phi, redraws, warnings)


def estimate_hellinger_reduced(model, m=DEFAULT_MC_SAMPLES, seed=DEFAULT_SEED, threads=None):
    """2 - 2 * mean(sqrt(prod c_i / c)); the summand has second moment 1."""
    _check_model(model, m)
    theta = model.parameters()
    if model.factorizes:
        return McDependenceEstimate(0.0, 0.0, int(m), theta, HELLINGER_REDUCED, seed, HELLINGER,
                                    second_moment=1.0)
    sums, redraws, ratio_sum = _summand_moments(model, _sqrt_ratio, int(m), seed, threads, track_ratio=True)
    mean, se, kurt = _mean_se_kurtosis(sums, int(m))
    warnings = _warnings_for(kurt, redraws)
    value = 2.0 - 2.0 * mean
    logger.info("Reduced Hellinger estimate %.6g (se %.3g, m=%d)", value, 2 * se, m)
    return McDependenceEstimate(value, 2.0 * se, int(m), theta, HELLINGER_REDUCED, seed, HELLINGER,
                                redraws, warnings, second_moment=ratio_sum / int(m))


def estimate_from_data(sample, template, phi, m=DEFAULT_MC_SAMPLES, seed=DEFAULT_SEED, threads=None,
                       form=GENERAL, ties="strict", starts=None):
    """Fit theta by pseudo-likelihood, then estimate at the fitted model."""
    if form not in (GENERAL, HELLINGER_REDUCED):
        raise ValidationError(f"unknown estimator form {form!r}")
    if form == HELLINGER_REDUCED and phi.kind is not PhiKind.HELLINGER:
        raise ValidationError("the reduced form is only defined for the Hellinger distance")
    fit = fit_pseudo_mle(sample, template, starts, ties)
    if form == HELLINGER_REDUCED:
        est = estimate_hellinger_reduced(fit.model, m, seed, threads)
    else:
        est = estimate_phi_mc(fit.model, phi, m, seed, threads)
    est.fit = fit
    est.theta_used = fit.theta_hat
    if not fit.converged:
        est.warnings.append("pseudo-likelihood fit did not converge")
    return est


# ============================================================================
# DETERMINISTIC ORACLE
# ============================================================================

@dataclass
class OracleResult:
    value: float
    error_estimate: float
    grid: int


def _smoothstep_integral(model, phi, grid):
    s = (np.arange(grid) + 0.5) / grid
    u1 = 3 * s ** 2 - 2 * s ** 3
    w1 = 6 * s * (1 - s) / grid
    q = model.q
    rest = np.stack(np.meshgrid(*([u1] * (q - 1)), indexing="ij"), axis=-1).reshape(-1, q - 1) if q > 1 \
        else np.zeros((1, 0))
    wrest = np.ones(rest.shape[0])
    if q > 1:
        for mesh in np.meshgrid(*([w1] * (q - 1)), indexing="ij"):
            wrest = wrest * mesh.reshape(-1)
    total = []
    for a, wa in zip(u1, w1):
        pts = np.column_stack([np.full(rest.shape[0], a), rest])
        log_prod = model.group_log_densities(pts)
        vals = np.exp(log_prod) * phi.from_log(model.log_ratio(pts))
        total.append(wa * math.fsum(wrest * vals))
    return math.fsum(total)


def quadrature_oracle(model, phi, grid=ORACLE_GRID):
    """Tensor midpoint rule in a smoothstep coordinate with one Richardson step."""
    if model.q > MAX_ORACLE_DIM:
        raise DimensionError(f"quadrature oracle supports q <= {MAX_ORACLE_DIM}, got {model.q}")
    if model.factorizes:
        return OracleResult(0.0, 0.0, grid)
    fine = _smoothstep_integral(model, phi, grid)
    coarse = _smoothstep_integral(model, phi, grid // 2)
    err = abs(fine - coarse) / 3.0
    return OracleResult(fine + (fine - coarse) / 3.0, err, grid)


# ============================================================================
# SIMULATION DRIVERS
# ============================================================================

def estimator_performance(true_model, template, phi, truth, n, m, n_reps, form=GENERAL,
                          seed=DEFAULT_SEED, threads=None):
    """Bias, variance, MSE and n*Var of the fit-then-estimate procedure over replicates."""
    if n_reps < 2:
        raise ValidationError("need at least 2 replicates")
    seeds = np.random.SeedSequence(seed).generate_state(n_reps)

    def one(rep_seed):
        rep_seed = int(rep_seed)
        u = true_model.sample(n, rep_seed, threads=1)
        sample = GroupedSample(u, true_model.structure)
        est = estimate_from_data(sample, template, phi, m, rep_seed + 1, threads=1, form=form)
        return est.value

    values = np.array(map_ordered(one, seeds, threads))
    bias = float(values.mean() - truth)
    var = float(values.var(ddof=1))
    logger.info("Performance n=%d m=%d reps=%d: bias %.4g var %.4g", n, m, n_reps, bias, var)
    return {
        "n": n, "m": m, "replicates": n_reps, "form": form, "truth": truth,
        "bias": bias, "variance": var, "mse": bias ** 2 + var, "n_var": n * var,
        "estimates": values,
    }
