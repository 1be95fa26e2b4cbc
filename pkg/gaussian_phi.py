# gaussian_phi.py - Phi-dependence under a Gaussian copula: closed forms, the
# general integral, asymptotic variances and plug-in estimates
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.stats import norm

from config import (
    DEFAULT_ALPHA,
    DEFAULT_SEED,
    GENERAL_PHI_MC_BUDGET,
    MAX_QUADRATURE_DIM,
    QUADRATURE_MAX_NODES,
    QUADRATURE_MAX_POINTS,
    QUADRATURE_NODES,
    QUADRATURE_RTOL,
    SINGULAR_PIVOT,
    SINGULAR_RATIO,
)
from errors import (
    DimensionError,
    InsufficientSampleError,
    NonDifferentiableError,
    SingularMatrixError,
    ValidationError,
)
from grouped_data import BlockCorrelationMatrix, GroupStructure, normal_scores_correlation
from parallel import map_chunks
from phi_functions import PhiKind, json_number, normalize

logger = logging.getLogger(__name__)

INTERCHANGE_NOTE = "MC-based, interchange assumed"


# ============================================================================
# RESULT TYPES
# ============================================================================

@dataclass
class NumericIntegral:
    value: float
    standard_error: float = None
    method: str = "quadrature"


@dataclass
class GradientMatrices:
    """Ingredients of the asymptotic variance 2 Tr((R (M - D_MR))^2)."""
    m_phi: np.ndarray
    d_mr: np.ndarray
    f1: np.ndarray = None
    f2: np.ndarray = None
    gamma: np.ndarray = None
    j_blocks: list = None


@dataclass
class GaussianDependenceResult:
    value: float
    normalized_value: float
    asymptotic_sd: float
    phi: object
    r: BlockCorrelationMatrix
    n: int = None
    alpha: float = DEFAULT_ALPHA
    ci: tuple = None
    method: str = "closed-form"
    notes: list = field(default_factory=list)
    singular: bool = False

    @property
    def finite(self):
        return math.isfinite(self.value) and not self.singular

    def to_dict(self):
        out = {
            "value": json_number(self.value),
            "normalized_value": json_number(self.normalized_value),
            "sd": json_number(self.asymptotic_sd),
            "ci": None if self.ci is None else [json_number(c) for c in self.ci],
            "n": self.n,
            "phi": self.phi.label,
            "method": self.method,
        }
        if self.singular:
            out["singular"] = True
        if self.notes:
            out["notes"] = list(self.notes)
        return out


# ============================================================================
# DETERMINANTS
# ============================================================================

def _cholesky(a):
    """Lower Cholesky factor and log-determinant, or None when numerically singular."""
    try:
        low = cholesky(np.asarray(a, dtype=float), lower=True)
    except LinAlgError:
        return None
    diag = np.diag(low)
    if diag.min() ** 2 < SINGULAR_PIVOT:
        return None
    return low, 2.0 * float(np.sum(np.log(diag)))


def _as_bcm(r):
    if isinstance(r, BlockCorrelationMatrix):
        return r
    raise ValidationError("expected a BlockCorrelationMatrix")


def _block_logdets(r):
    out = []
    for i in range(r.structure.k):
        res = _cholesky(r.block(i, i))
        if res is None:
            raise SingularMatrixError(f"within-group block {i + 1} is singular")
        out.append(res[1])
    return out


def _log_ratio(r):
    """log(|R| / prod |R_ii|) and the full Cholesky (None when R is singular)."""
    blocks = _block_logdets(r)
    full = _cholesky(r.entries)
    if full is None:
        return -math.inf, None, blocks
    ratio = full[1] - math.fsum(blocks)
    if ratio < math.log(SINGULAR_RATIO):
        return -math.inf, None, blocks
    return ratio, full, blocks


def is_singular(r):
    return _log_ratio(_as_bcm(r))[1] is None


# ============================================================================
# CLOSED FORMS
# ============================================================================

def mutual_information_gaussian(r):
    """-1/2 log(|R| / prod |R_ii|); +inf for singular R."""
    r = _as_bcm(r)
    if r.is_block_diagonal():
        _block_logdets(r)
        return 0.0
    ratio, full, _ = _log_ratio(r)
    if full is None:
        return math.inf
    return max(0.0, -0.5 * ratio)


def hellinger_gaussian(r):
    """Hellinger distance in [0, 2]; 2 in the singular limit."""
    r = _as_bcm(r)
    if r.is_block_diagonal():
        _block_logdets(r)
        return 0.0
    ratio, full, blocks = _log_ratio(r)
    if full is None:
        return 2.0
    q = r.q
    logdet_r0 = math.fsum(blocks)
    logdet_sum = _cholesky(r.r0 + r.entries)[1]
    log_term = 0.5 * q * math.log(2.0) + 0.25 * full[1] - 0.5 * (logdet_sum - logdet_r0) - 0.25 * logdet_r0
    return float(np.clip(2.0 - 2.0 * math.exp(log_term), 0.0, 2.0))


# ============================================================================
# GENERAL PHI: INTEGRAL FORM
# ============================================================================

def _ratio_setup(r):
    """(c, D, R^-1, R0^-1, L, L0) with log k(x) = c - x'Dx/2."""
    ratio, full, blocks = _log_ratio(r)
    if full is None:
        raise SingularMatrixError("correlation matrix is singular")
    low, logdet_r = full
    low0, logdet_r0 = _cholesky(r.r0)
    eye = np.eye(r.q)
    r_inv = cho_solve((low, True), eye)
    r0_inv = cho_solve((low0, True), eye)
    r_inv = 0.5 * (r_inv + r_inv.T)
    r0_inv = 0.5 * (r0_inv + r0_inv.T)
    c = 0.5 * (logdet_r0 - logdet_r)
    return c, r_inv - r0_inv, r_inv, r0_inv, low, low0


def _quad_form(x, mat):
    return np.einsum("ij,jk,ik->i", x, mat, x)


def _tilt(phi):
    """(offset, slope, beta) for Phi(k) = offset + slope * k + k**beta * h(log k).

    E[1] = E[k] = 1 under N(0, R0), so only the k**beta * h part needs a grid.
    """
    if math.isfinite(phi.phi_star_at_zero):
        return phi.phi_at_zero, phi.phi_star_at_zero, 0.5
    return phi.phi_at_zero, 0.0, phi.growth_exponent


def _tilted_remainder(phi, log_k):
    """h(L) = (Phi(e^L) - offset - slope e^L) e^(-beta L), without overflow."""
    L = np.asarray(log_k, dtype=float)
    kind = phi.kind
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        if kind is PhiKind.MUTUAL_INFORMATION:
            return L
        if kind is PhiKind.HELLINGER:
            return np.full(L.shape, -2.0)
        if kind is PhiKind.TOTAL_VARIATION or (kind is PhiKind.POWER_ALPHA and phi.alpha == 1.0):
            return -2.0 * np.exp(-0.5 * np.abs(L))
        if kind is PhiKind.JENSEN_SHANNON:
            up = np.maximum(L, 0.0)
            down = np.minimum(L, 0.0)
            high = -up * np.exp(-0.5 * up) - 2.0 * np.cosh(0.5 * up) * np.log1p(np.exp(-up))
            low = down * np.exp(0.5 * down) - 2.0 * np.cosh(0.5 * down) * np.log1p(np.exp(down))
            return np.where(L >= 0.0, high, low)
        if kind is PhiKind.PEARSON:
            return 1.0 - 2.0 * np.exp(-L)
        alpha = phi.alpha
        up = np.maximum(L, 0.0)
        down = np.minimum(L, -1e-300)
        high = (-np.expm1(-up)) ** alpha - np.exp(-alpha * up)
        low = -np.exp(-alpha * down + np.log(-np.expm1(alpha * np.log1p(-np.exp(down)))))
        return np.where(L >= 0.0, high, low)


def _tensor_mean(func, coefs, nodes):
    """E[func(sum_i coefs_i Z_i^2)] over independent standard normals Z.

    Tensor Gauss-Hermite folded onto the nonnegative nodes; the first axis is
    looped so the grid holds (nodes/2)**(q-1) points at a time.
    """
    x, w = hermgauss(nodes)
    keep = x >= 0.0
    z2 = 2.0 * x[keep] ** 2
    w = np.where(x[keep] > 0.0, 2.0, 1.0) * w[keep] / math.sqrt(math.pi)
    rest, rest_w = np.zeros(1), np.ones(1)
    for a in coefs[1:]:
        rest = (rest[:, None] + a * z2[None, :]).reshape(-1)
        rest_w = (rest_w[:, None] * w[None, :]).reshape(-1)
    return math.fsum(wi * float(np.dot(rest_w, func(coefs[0] * zi + rest))) for zi, wi in zip(z2, w))


def _quadrature(r, phi, nodes=QUADRATURE_NODES):
    """E[Phi(k)] on a Gauss-Hermite grid scaled to k**beta, doubling nodes until stable."""
    q = r.q
    if q > MAX_QUADRATURE_DIM:
        raise DimensionError(f"quadrature supports q <= {MAX_QUADRATURE_DIM}, got {q}")
    c, _, r_inv, _, _, low0 = _ratio_setup(r)
    mu = np.linalg.eigvalsh(low0.T @ r_inv @ low0)
    lam = mu - 1.0
    if np.any(phi.growth_exponent * lam + 1.0 <= 0):
        return math.inf
    offset, slope, beta = _tilt(phi)
    # axis i is rescaled to variance 1 / (1 + beta lam_i), where k**beta times
    # the N(0, 1) weight is again a centred Gaussian
    scale = 1.0 / (1.0 + beta * lam)
    coefs = -0.5 * lam * scale
    log_front = beta * c + 0.5 * float(np.sum(np.log(scale)))

    def integrand(s):
        return _tilted_remainder(phi, c + s)

    value = None
    while True:
        mean = _tensor_mean(integrand, coefs, nodes)
        front = math.exp(log_front) if log_front < 700.0 else math.inf
        current = offset + slope + front * mean
        if value is not None and abs(current - value) <= QUADRATURE_RTOL * abs(current) + 1e-15:
            return current
        value = current
        if nodes * 2 > QUADRATURE_MAX_NODES or (nodes + 1) ** q > QUADRATURE_MAX_POINTS:
            logger.warning("Quadrature for %s not settled at %d nodes per axis", phi.label, nodes)
            return value
        nodes *= 2


def _monte_carlo(r, phi, m, seed, threads):
    c, dmat, _, _, _, low0 = _ratio_setup(r)
    q = r.q

    def chunk(rng, size):
        x0 = rng.standard_normal((size, q)) @ low0.T
        vals = phi.from_log(c - 0.5 * _quad_form(x0, dmat))
        return math.fsum(vals), math.fsum(vals * vals)

    parts = map_chunks(chunk, m, seed, threads)
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    if not math.isfinite(total):
        return math.inf, None
    mean = total / m
    var = max(total_sq / m - mean * mean, 0.0) * m / max(m - 1, 1)
    return mean, math.sqrt(var / m)


def phi_gaussian_numeric(r, phi, method="quadrature", m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED,
                         threads=None, nodes=QUADRATURE_NODES):
    """E_{N(0,R0)}[Phi(k(X))] by Gauss-Hermite quadrature (q <= 4) or Monte Carlo."""
    r = _as_bcm(r)
    if method not in ("quadrature", "monte-carlo"):
        raise ValidationError(f"unknown integration method {method!r}")
    if method == "quadrature" and r.q > MAX_QUADRATURE_DIM:
        raise DimensionError(f"quadrature supports q <= {MAX_QUADRATURE_DIM}, got {r.q}")
    if r.is_block_diagonal():
        _block_logdets(r)
        return NumericIntegral(0.0, 0.0, method)
    if is_singular(r):
        return NumericIntegral(phi.max_value, None, method)
    if method == "quadrature":
        return NumericIntegral(_quadrature(r, phi, nodes), None, method)
    value, se = _monte_carlo(r, phi, m, seed, threads)
    return NumericIntegral(value, se, method)


def gaussian_dependence(r, phi, m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    """(value, method) using the closed form when one exists."""
    if phi.kind is PhiKind.MUTUAL_INFORMATION:
        return mutual_information_gaussian(r), "closed-form"
    if phi.kind is PhiKind.HELLINGER:
        return hellinger_gaussian(r), "closed-form"
    method = "quadrature" if r.q <= MAX_QUADRATURE_DIM else "monte-carlo"
    return phi_gaussian_numeric(r, phi, method, m, seed, threads).value, method


# ============================================================================
# ASYMPTOTIC VARIANCE
# ============================================================================

def _block_part(mat, structure):
    return np.where(structure.block_mask(), mat, 0.0)


def gradient_matrices(r, phi, m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    """Matrix M_Phi (and its pieces) such that dD = Tr(M_Phi dR)."""
    r = _as_bcm(r)
    if phi.kind is PhiKind.TOTAL_VARIATION or (phi.kind is PhiKind.POWER_ALPHA and phi.alpha == 1.0):
        raise NonDifferentiableError(f"{phi.label} has no derivative at 1; asymptotic variance undefined")
    _, dmat, _, r0_inv, _, _ = _ratio_setup(r)
    rmat, r0 = r.entries, r.r0
    structure = r.structure

    if phi.kind is PhiKind.MUTUAL_INFORMATION:
        m_phi = -0.5 * dmat
        return GradientMatrices(m_phi, np.diag(m_phi @ rmat))

    if phi.kind is PhiKind.HELLINGER:
        sum_inv = np.linalg.inv(r0 + rmat)
        j = rmat @ np.linalg.inv(np.eye(r.q) + r0_inv @ rmat)
        gamma = np.zeros_like(rmat)
        j_blocks = []
        for sl in structure.slices:
            rii_inv = np.linalg.inv(rmat[sl, sl])
            j_blocks.append(j[sl, sl])
            gamma[sl, sl] = rii_inv @ j[sl, sl] @ rii_inv
        log_scale = (0.5 * r.q * math.log(2.0) - 0.5 * mutual_information_gaussian(r)
                     - 0.5 * (_cholesky(r0 + rmat)[1] - _cholesky(r0)[1]))
        m_phi = math.exp(log_scale) * (-0.5 * dmat + sum_inv - gamma)
        m_phi = 0.5 * (m_phi + m_phi.T)
        return GradientMatrices(m_phi, np.diag(m_phi @ rmat), gamma=gamma, j_blocks=j_blocks)

    return _expectation_matrices(r, phi, m, seed, threads)


def _expectation_matrices(r, phi, m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    """M_Phi from Monte Carlo expectations; valid for any differentiable Phi."""
    c, dmat, r_inv, r0_inv, low, low0 = _ratio_setup(r)
    rmat, structure, q = r.entries, r.structure, r.q

    def chunk(rng, size):
        z = rng.standard_normal((size, q))
        x0 = z @ low0.T
        x1 = z @ low.T
        a0 = phi.from_log(c - 0.5 * _quad_form(x0, dmat))
        a1 = phi.derivative_from_log(c - 0.5 * _quad_form(x1, dmat))
        return x0.T @ (a0[:, None] * x0), math.fsum(a1), x1.T @ (a1[:, None] * x1), math.fsum(a0)

    parts = map_chunks(chunk, m, seed, threads)
    e_a_xx = sum((p[0] for p in parts), np.zeros((q, q))) / m
    e_da = math.fsum(p[1] for p in parts) / m
    e_da_xx = sum((p[2] for p in parts), np.zeros((q, q))) / m
    if q <= MAX_QUADRATURE_DIM:
        d_value = _quadrature(r, phi)
    else:
        d_value = math.fsum(p[3] for p in parts) / m
    f1 = r0_inv @ _block_part(e_a_xx, structure) @ r0_inv
    f2 = r0_inv @ _block_part(e_da_xx, structure) @ r0_inv
    m_phi = 0.5 * (f1 - d_value * r0_inv - e_da * dmat + r_inv @ e_da_xx @ r_inv - f2)
    m_phi = 0.5 * (m_phi + m_phi.T)
    logger.debug("General M_Phi for %s from %d draws", phi.label, m)
    return GradientMatrices(m_phi, np.diag(m_phi @ rmat), f1=f1, f2=f2)


def asymptotic_sd(r, phi, m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED, threads=None):
    """zeta_Phi with zeta^2 = 2 Tr((R (M - D_MR))^2)."""
    r = _as_bcm(r)
    mats = gradient_matrices(r, phi, m, seed, threads)
    s = r.entries @ (mats.m_phi - np.diag(mats.d_mr))
    zeta2 = 2.0 * float(np.trace(s @ s))
    return math.sqrt(max(zeta2, 0.0))


# ============================================================================
# PLUG-IN ESTIMATES
# ============================================================================

def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")


def gaussian_result(r, phi, n=None, alpha=DEFAULT_ALPHA, m=GENERAL_PHI_MC_BUDGET, seed=DEFAULT_SEED,
                    threads=None, with_sd=True):
    """Value, asymptotic sd and confidence interval for a given correlation matrix."""
    _check_alpha(alpha)
    r = _as_bcm(r)
    value, method = gaussian_dependence(r, phi, m, seed, threads)
    notes = [] if phi.closed_form else [INTERCHANGE_NOTE]
    if is_singular(r) or not math.isfinite(value):
        logger.warning("Singular correlation matrix: %s estimate is at its maximum", phi.label)
        return GaussianDependenceResult(value, normalize(phi, value), None, phi, r, n, alpha, None,
                                        method, notes, singular=True)
    sd = None
    if with_sd:
        try:
            sd = asymptotic_sd(r, phi, m, seed, threads)
        except NonDifferentiableError as exc:
            notes.append(str(exc))
    ci = None
    if sd is not None and n:
        half = norm.ppf(1.0 - alpha / 2.0) * sd / math.sqrt(n)
        ci = (value - half, value + half)
    return GaussianDependenceResult(value, normalize(phi, value), sd, phi, r, n, alpha, ci, method, notes)


def estimate_gaussian(sample, phi, alpha=DEFAULT_ALPHA, ties="strict", m=GENERAL_PHI_MC_BUDGET,
                      seed=DEFAULT_SEED, threads=None):
    """Plug-in estimate D(R_n) from the normal-scores rank correlation matrix."""
    if sample.n < sample.q + 2:
        raise InsufficientSampleError(f"need n >= q + 2 = {sample.q + 2}, got {sample.n}")
    r_hat = normal_scores_correlation(sample, ties)
    result = gaussian_result(r_hat, phi, sample.n, alpha, m, seed, threads)
    logger.debug("Gaussian %s estimate %.6g (n=%d)", phi.label, result.value, sample.n)
    return result


# ============================================================================
# PAIRED EXCHANGEABLE BLOCKS (two groups of two, within rho1, across rho2)
# ============================================================================

def paired_block_matrix(rho1, rho2):
    r = np.array([
        [1.0, rho1, rho2, rho2],
        [rho1, 1.0, rho2, rho2],
        [rho2, rho2, 1.0, rho1],
        [rho2, rho2, rho1, 1.0],
    ])
    return BlockCorrelationMatrix(r, GroupStructure((2, 2)))


def paired_block_mutual_information(rho1, rho2):
    num = (rho1 - 2 * rho2 + 1) * (rho1 + 2 * rho2 + 1)
    if num <= 0:
        return math.inf
    return -0.5 * math.log(num / (1 + rho1) ** 2)


def paired_block_half_hellinger(rho1, rho2):
    num = (rho1 - 2 * rho2 + 1) * (rho1 + 2 * rho2 + 1)
    den = (1 + rho1 - rho2) * (1 + rho1 + rho2)
    return 1.0 - math.sqrt(1 + rho1) * max(num, 0.0) ** 0.25 / math.sqrt(den)


def paired_block_zeta_mutual_information(rho1, rho2):
    return 2.0 * abs(rho2) / (1 + rho1)


def paired_block_half_hellinger_zeta(rho1, rho2):
    num = (rho1 - 2 * rho2 + 1) * (rho1 + 2 * rho2 + 1)
    top = max(num, 0.0) ** 0.25 * (2 * rho2 ** 2 + (1 + rho1) ** 2) * abs(rho2)
    bottom = 2.0 * math.sqrt(1 + rho1) * (rho1 - rho2 + 1) ** 1.5 * (rho1 + rho2 + 1) ** 1.5
    return top / bottom
