# copula_models.py - Gaussian, Archimedean and two-level nested Archimedean
# copulas: generator calculus, log-densities and frailty samplers
import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import logsumexp, ndtr, ndtri

from config import BOUNDARY_EPS, CLAYTON_LOWER, MAX_DENSITY_DIM, MAX_GENERATOR_ORDER, THETA_UPPER
from errors import (
    BoundaryError,
    DimensionError,
    DomainError,
    NestingConditionError,
    OrderOverflowError,
    ValidationError,
)
from grouped_data import BlockCorrelationMatrix, GroupStructure
from parallel import map_chunks

logger = logging.getLogger(__name__)

FAMILIES = ("gumbel", "clayton")


# ============================================================================
# GENERATORS
# ============================================================================

@lru_cache(maxsize=None)
def _gumbel_table(order):
    """Integer polynomial coefficients (in a = 1/theta) of the Gumbel derivative sum.

    psi^(d)(t) = psi(t) * sum_j b_{d,j}(a) * t^(a*j - d)
    """
    table = {0: (1,)}
    for d in range(order):
        nxt = {}
        for j, coef in table.items():
            grow = P.polymul(coef, (-d, j))
            shift = P.polymul(coef, (0, -1))
            nxt[j] = P.polyadd(nxt.get(j, (0,)), grow)
            nxt[j + 1] = P.polyadd(nxt.get(j + 1, (0,)), shift)
        table = {j: tuple(int(round(c)) for c in v) for j, v in nxt.items()}
    return table


@dataclass(frozen=True)
class ArchimedeanGenerator:
    family: str
    theta: float

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise ValidationError(f"unknown Archimedean family {self.family!r}")
        object.__setattr__(self, "family", fam)
        theta = float(self.theta)
        object.__setattr__(self, "theta", theta)
        if not math.isfinite(theta):
            raise DomainError("theta must be finite")
        if fam == "gumbel" and theta < 1.0:
            raise DomainError(f"Gumbel theta must be >= 1, got {theta}")
        if fam == "clayton" and theta <= 0.0:
            raise DomainError(f"Clayton theta must be > 0, got {theta}")

    @property
    def independent(self):
        return self.family == "gumbel" and self.theta == 1.0

    @property
    def lower_bound(self):
        return 1.0 if self.family == "gumbel" else CLAYTON_LOWER

    def kendall_tau(self):
        if self.family == "gumbel":
            return 1.0 - 1.0 / self.theta
        return self.theta / (self.theta + 2.0)

    # ------------------------------------------------------------------
    # psi and its inverse
    # ------------------------------------------------------------------
    def psi(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "gumbel":
            return np.exp(-t ** (1.0 / self.theta))
        return (1.0 + t) ** (-1.0 / self.theta)

    def psi_inv(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "gumbel":
            return (-np.log(u)) ** self.theta
        return np.expm1(-self.theta * np.log(u))

    def log_psi_inv(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "gumbel":
            return self.theta * np.log(-np.log(u))
        return np.log(np.expm1(-self.theta * np.log(u)))

    def log_abs_psi_inv_prime(self, u):
        u = np.asarray(u, dtype=float)
        lu = np.log(u)
        if self.family == "gumbel":
            return math.log(self.theta) + (self.theta - 1.0) * np.log(-lu) - lu
        return math.log(self.theta) - (self.theta + 1.0) * lu

    # ------------------------------------------------------------------
    # derivatives
    # ------------------------------------------------------------------
    def log_abs_derivative(self, log_t, order):
        """log |psi^(order)(t)| from log t; the sign is (-1)^order."""
        if order > MAX_GENERATOR_ORDER:
            raise OrderOverflowError(f"generator derivatives are tabulated up to order {MAX_GENERATOR_ORDER}")
        log_t = np.asarray(log_t, dtype=float)
        if self.family == "clayton":
            inv = 1.0 / self.theta
            const = math.fsum(math.log(inv + j) for j in range(order))
            return const - (inv + order) * np.logaddexp(0.0, log_t)
        a = 1.0 / self.theta
        log_psi = -np.exp(a * log_t)
        if order == 0:
            return log_psi
        terms = []
        for j, coef in sorted(_gumbel_table(order).items()):
            b = P.polyval(a, coef)
            if b == 0.0:
                continue
            terms.append(math.log(abs(b)) + (a * j - order) * log_t)
        return log_psi + logsumexp(np.stack(terms, axis=-1), axis=-1)

    def derivative(self, t, order=0):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("generator argument must be >= 0")
        if order < 0:
            raise DomainError("derivative order must be >= 0")
        sign = -1.0 if order % 2 else 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = sign * np.exp(self.log_abs_derivative(np.log(t), order))
        if np.any(t == 0):
            if order == 0:
                at_zero = 1.0
            elif self.family == "clayton":
                at_zero = sign * math.exp(math.fsum(math.log(1.0 / self.theta + j) for j in range(order)))
            elif self.theta == 1.0:
                at_zero = sign
            else:
                at_zero = sign * math.inf
            out = np.where(t == 0, at_zero, out)
        return out if out.ndim else float(out)


def generator_eval(g, t, order=0):
    """psi^(order)(t) in closed form."""
    if order > MAX_GENERATOR_ORDER:
        raise OrderOverflowError(f"order must be <= {MAX_GENERATOR_ORDER}, got {order}")
    return g.derivative(t, order)


# ============================================================================
# DENSITY HELPERS
# ============================================================================

def _rows(u):
    u = np.asarray(u, dtype=float)
    return u[None, :] if u.ndim == 1 else u


def boundary_rows(u, eps=BOUNDARY_EPS):
    """Rows with a coordinate within eps of 0 or 1 (or outside the cube)."""
    u = _rows(u)
    return np.any((u <= eps) | (u >= 1.0 - eps) | np.isnan(u), axis=1)


def _check_interior(u):
    if boundary_rows(u).any():
        raise BoundaryError("copula density requested at a point on (or within 1e-12 of) the boundary")


def _falling(beta, n):
    out = 1.0
    for i in range(n):
        out *= beta - i
    return out


def partial_bell(n, k, x):
    """Partial Bell polynomial B_{n,k}(x_1, ..., x_{n-k+1}); x is 1-based via x[i-1]."""
    table = {(0, 0): 1.0}

    def b(nn, kk):
        if (nn, kk) in table:
            return table[(nn, kk)]
        if nn == 0 or kk == 0:
            return 0.0
        total = 0.0
        for i in range(1, nn - kk + 2):
            total += math.comb(nn - 1, i - 1) * x[i - 1] * b(nn - i, kk - 1)
        table[(nn, kk)] = total
        return total

    return b(n, k)


def _archimedean_log_density(g, u):
    u = _rows(u)
    d = u.shape[1]
    if d == 1:
        return np.zeros(u.shape[0])
    if d > MAX_DENSITY_DIM:
        raise DimensionError(f"densities are available up to dimension {MAX_DENSITY_DIM}, got {d}")
    if g.independent:
        return np.zeros(u.shape[0])
    log_s = logsumexp(g.log_psi_inv(u), axis=1)
    return g.log_abs_derivative(log_s, d) + g.log_abs_psi_inv_prime(u).sum(axis=1)


def archimedean_density(g, u):
    """c(u) = |psi^(d)(sum psi^-1(u_j))| * prod |(psi^-1)'(u_j)|."""
    _check_interior(u)
    out = np.exp(_archimedean_log_density(g, u))
    return out if np.ndim(u) > 1 else float(out[0])


# ============================================================================
# MODELS
# ============================================================================

class CopulaModel:
    """Common interface: log-densities, group marginals, sampling and parameters."""

    structure: GroupStructure

    @property
    def q(self):
        return self.structure.q

    @property
    def density_available(self):
        return True

    @property
    def factorizes(self):
        return False

    def log_density(self, u):
        raise NotImplementedError

    def group_log_densities(self, u):
        raise NotImplementedError

    def log_ratio(self, u):
        """log(c(u) / prod_i c_i(u_i)); exactly 0 for models that factorize."""
        u = _rows(u)
        _check_interior(u)
        if self.factorizes:
            return np.zeros(u.shape[0])
        return self.log_density(u) - self.group_log_densities(u)

    def density(self, u):
        _check_interior(u)
        return np.exp(self.log_density(_rows(u)))

    def sample(self, m, seed, threads=None):
        if int(m) < 1:
            raise ValidationError("sample size must be >= 1")
        parts = map_chunks(self.draw, int(m), seed, threads)
        return np.vstack(parts)

    def draw(self, rng, size):
        raise NotImplementedError

    def parameters(self):
        raise NotImplementedError

    def with_parameters(self, theta):
        raise NotImplementedError

    def bounds(self):
        raise NotImplementedError


class GaussianCopula(CopulaModel):
    def __init__(self, r):
        if not isinstance(r, BlockCorrelationMatrix):
            raise ValidationError("GaussianCopula needs a BlockCorrelationMatrix")
        self.r = r
        self.structure = r.structure
        w, v = np.linalg.eigh(r.entries)
        self._factor = v * np.sqrt(np.clip(w, 0.0, None))
        self._log_det = float(np.sum(np.log(w))) if w.min() > 0 else -math.inf
        self._inv = np.linalg.inv(r.entries) if w.min() > 0 else None

    @property
    def name(self):
        return "gaussian"

    @property
    def factorizes(self):
        return self.r.is_block_diagonal()

    @staticmethod
    def _log_gauss(z, inv, log_det):
        quad = np.einsum("ij,jk,ik->i", z, inv - np.eye(inv.shape[0]), z)
        return -0.5 * log_det - 0.5 * quad

    def log_density(self, u):
        u = _rows(u)
        if self._inv is None:
            raise ValidationError("Gaussian copula with singular correlation has no density")
        return self._log_gauss(ndtri(u), self._inv, self._log_det)

    def group_log_densities(self, u):
        u = _rows(u)
        z = ndtri(u)
        total = np.zeros(u.shape[0])
        for i, sl in enumerate(self.structure.slices):
            block = self.r.block(i, i)
            if block.shape[0] == 1:
                continue
            total += self._log_gauss(z[:, sl], np.linalg.inv(block), float(np.linalg.slogdet(block)[1]))
        return total

    def draw(self, rng, size):
        z = rng.standard_normal((size, self.q)) @ self._factor.T
        return ndtr(z)

    def parameters(self):
        iu = np.triu_indices(self.q, 1)
        return self.r.entries[iu]

    def with_parameters(self, theta):
        iu = np.triu_indices(self.q, 1)
        mat = np.eye(self.q)
        mat[iu] = theta
        mat = mat + np.triu(mat, 1).T
        return GaussianCopula(BlockCorrelationMatrix(mat, self.structure))

    def bounds(self):
        return [(-1.0, 1.0)] * (self.q * (self.q - 1) // 2)

    def describe(self):
        return {"family": "gaussian", **self.r.to_dict()}


def positive_stable(rng, alpha, size):
    """Kanter / Chambers-Mallows-Stuck draw with Laplace transform exp(-t^alpha)."""
    if alpha >= 1.0:
        return np.ones(size)
    theta = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    part = np.sin(alpha * theta) / np.sin(theta) ** (1.0 / alpha)
    return part * (np.sin((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha)


def frailty(rng, g, size):
    if g.family == "clayton":
        return rng.gamma(1.0 / g.theta, 1.0, size)
    return positive_stable(rng, 1.0 / g.theta, size)


def tilted_stable(rng, beta, v0):
    """Draws with Laplace transform exp(-v0 * ((1 + t)^beta - 1)), one per entry of v0.

    Each draw is a sum of ceil(v0) exponentially tilted stable pieces, each
    accepted by rejection with probability >= exp(-1).
    """
    v0 = np.asarray(v0, dtype=float)
    if beta >= 1.0:
        return v0.copy()
    pieces = np.maximum(np.ceil(v0), 1).astype(int)
    owner = np.repeat(np.arange(v0.size), pieces)
    scale = (v0 / pieces)[owner] ** (1.0 / beta)
    out = np.zeros(owner.size)
    pending = np.arange(owner.size)
    while pending.size:
        s = scale[pending] * positive_stable(rng, beta, pending.size)
        accept = rng.uniform(size=pending.size) <= np.exp(-s)
        out[pending[accept]] = s[accept]
        pending = pending[~accept]
    return np.bincount(owner, weights=out, minlength=v0.size)


class ArchimedeanCopula(CopulaModel):
    def __init__(self, generator, structure):
        self.generator = generator
        self.structure = GroupStructure.parse(structure) if not isinstance(structure, GroupStructure) else structure

    @property
    def name(self):
        return self.generator.family

    @property
    def density_available(self):
        return self.q <= MAX_DENSITY_DIM

    @property
    def factorizes(self):
        return self.generator.independent or self.structure.k == 1

    def log_density(self, u):
        return _archimedean_log_density(self.generator, _rows(u))

    def group_log_densities(self, u):
        u = _rows(u)
        total = np.zeros(u.shape[0])
        for sl in self.structure.slices:
            total += _archimedean_log_density(self.generator, u[:, sl])
        return total

    def draw(self, rng, size):
        v = frailty(rng, self.generator, size)
        e = rng.exponential(1.0, (size, self.q))
        return self.generator.psi(e / v[:, None])

    def parameters(self):
        return np.array([self.generator.theta])

    def with_parameters(self, theta):
        return ArchimedeanCopula(ArchimedeanGenerator(self.generator.family, float(np.ravel(theta)[0])), self.structure)

    def bounds(self):
        return [(self.generator.lower_bound, THETA_UPPER)]

    def describe(self):
        return {"family": self.generator.family, "theta": self.generator.theta, "sizes": list(self.structure.sizes)}


class NestedArchimedeanCopula(CopulaModel):
    """Root generator psi_0 applied to child Archimedean copulas of the groups."""

    def __init__(self, root, children):
        self.root = root
        self.children = [(g, int(d)) for g, d in children]
        if not self.children:
            raise ValidationError("nested copula needs at least one child")
        for g, _ in self.children:
            if g.family != root.family:
                raise NestingConditionError("root and children must belong to the same family")
            if root.theta > g.theta:
                raise NestingConditionError(
                    f"nesting condition violated: theta0={root.theta} > child theta={g.theta}")
        self.structure = GroupStructure(tuple(d for _, d in self.children))

    @property
    def name(self):
        return f"nested-{self.root.family}"

    @property
    def family(self):
        return self.root.family

    @property
    def density_available(self):
        return self.q <= MAX_DENSITY_DIM

    @property
    def factorizes(self):
        return self.root.independent or self.structure.k == 1

    def _betas(self):
        return [self.root.theta / g.theta for g, _ in self.children]

    def log_density(self, u):
        u = _rows(u)
        q = u.shape[1]
        if q > MAX_DENSITY_DIM:
            raise DimensionError(f"nested densities are available up to dimension {MAX_DENSITY_DIM}, got {q}")
        gumbel = self.root.family == "gumbel"
        bases, log_h, prime_sum, bell = [], [], np.zeros(u.shape[0]), []
        for (g, d), sl, beta in zip(self.children, self.structure.slices, self._betas()):
            block = u[:, sl]
            log_t = logsumexp(g.log_psi_inv(block), axis=1)
            prime_sum += g.log_abs_psi_inv_prime(block).sum(axis=1)
            if gumbel:
                base = log_t
                log_h.append(beta * base)
            else:
                base = np.logaddexp(0.0, log_t)
                log_h.append(np.log(np.expm1(beta * base)))
            bases.append(base)
            consts = [_falling(beta, n) for n in range(1, d + 1)]
            bell.append({mi: partial_bell(d, mi, consts) for mi in range(1, d + 1)})
        log_s = logsumexp(np.stack(log_h, axis=1), axis=1)
        sizes = self.structure.sizes
        betas = self._betas()
        terms = []
        for ms in itertools.product(*[range(1, d + 1) for d in sizes]):
            coef = [bell[i][mi] for i, mi in enumerate(ms)]
            if any(c == 0.0 for c in coef):
                continue
            term = self.root.log_abs_derivative(log_s, sum(ms))
            for i, mi in enumerate(ms):
                term = term + math.log(abs(coef[i])) + (mi * betas[i] - sizes[i]) * bases[i]
            terms.append(term)
        return logsumexp(np.stack(terms, axis=1), axis=1) + prime_sum

    def group_log_densities(self, u):
        u = _rows(u)
        total = np.zeros(u.shape[0])
        for (g, _), sl in zip(self.children, self.structure.slices):
            total += _archimedean_log_density(g, u[:, sl])
        return total

    def draw(self, rng, size):
        v0 = frailty(rng, self.root, size)
        cols = []
        for (g, d), beta in zip(self.children, self._betas()):
            if self.root.family == "gumbel":
                v = v0 ** (1.0 / beta) * positive_stable(rng, beta, size)
            else:
                v = tilted_stable(rng, beta, v0)
            e = rng.exponential(1.0, (size, d))
            cols.append(g.psi(e / v[:, None]))
        return np.hstack(cols)

    def parameters(self):
        return np.array([self.root.theta] + [g.theta for g, _ in self.children])

    def with_parameters(self, theta):
        theta = np.ravel(theta)
        fam = self.root.family
        children = [(ArchimedeanGenerator(fam, float(t)), d) for t, (_, d) in zip(theta[1:], self.children)]
        return NestedArchimedeanCopula(ArchimedeanGenerator(fam, float(theta[0])), children)

    def bounds(self):
        lo = self.root.lower_bound
        return [(lo, THETA_UPPER)] * (1 + len(self.children))

    def describe(self):
        return {
            "family": self.name,
            "theta0": self.root.theta,
            "children": [{"theta": g.theta, "d": d} for g, d in self.children],
        }


def nested_density(c, u):
    """Mixed partial derivative of the nested cdf at interior points."""
    if c.q > MAX_DENSITY_DIM:
        raise DimensionError(f"nested densities are available up to dimension {MAX_DENSITY_DIM}, got {c.q}")
    _check_interior(u)
    out = np.exp(c.log_density(_rows(u)))
    return out if np.ndim(u) > 1 else float(out[0])


def nested_cdf(c, u):
    """C_0(C_1(u_1), ..., C_k(u_k)) at one point; used for finite-difference checks."""
    u = np.asarray(u, dtype=float)
    inner = []
    for (g, _), sl in zip(c.children, c.structure.slices):
        inner.append(g.psi(np.sum(g.psi_inv(u[sl]))))
    return float(c.root.psi(np.sum(c.root.psi_inv(np.array(inner)))))


def archimedean_cdf(g, u):
    return float(g.psi(np.sum(g.psi_inv(np.asarray(u, dtype=float)))))


def sample(model, m, seed, threads=None):
    """m i.i.d. draws from the copula model."""
    out = model.sample(m, seed, threads)
    logger.debug("Sampled %d rows from %s", out.shape[0], model.name)
    return out
