# grouped_data.py - grouped samples, ranks, normal scores and the normal-scores
# rank correlation matrix, plus CSV / log-return / window plumbing
import logging
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtri
from scipy.stats import rankdata

from errors import (
    DegenerateColumnError,
    DomainError,
    GroupStructureError,
    InsufficientSampleError,
    MissingValueError,
    TieError,
    ValidationError,
    WindowTooLargeError,
)

logger = logging.getLogger(__name__)

TIE_POLICIES = ("strict", "midrank")
MISSING_POLICIES = ("drop-row", "error")
NA_VALUES = ["", "NA"]


# ============================================================================
# GROUP STRUCTURE
# ============================================================================

@dataclass(frozen=True)
class GroupStructure:
    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise GroupStructureError(f"group sizes must be positive integers, got {list(self.sizes)}")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def parse(cls, text):
        """'2,2' -> GroupStructure((2, 2))."""
        if isinstance(text, GroupStructure):
            return text
        if isinstance(text, (list, tuple)):
            return cls(tuple(text))
        parts = [p for p in re.split(r"[,\s]+", str(text).strip()) if p]
        try:
            return cls(tuple(int(p) for p in parts))
        except ValueError:
            raise GroupStructureError(f"cannot parse groups {text!r}") from None

    @property
    def q(self):
        return sum(self.sizes)

    @property
    def k(self):
        return len(self.sizes)

    @property
    def offsets(self):
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)]))

    @property
    def slices(self):
        o = self.offsets
        return tuple(slice(o[i], o[i + 1]) for i in range(self.k))

    def group_of(self):
        """Group index of every column."""
        return np.repeat(np.arange(self.k), self.sizes)

    def block_mask(self):
        g = self.group_of()
        return g[:, None] == g[None, :]

    def block_diagonal(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        return np.where(self.block_mask(), matrix, 0.0)

    def subset(self, groups):
        return GroupStructure(tuple(self.sizes[g] for g in groups))

    def columns_of(self, groups):
        sl = self.slices
        return np.concatenate([np.arange(sl[g].start, sl[g].stop) for g in groups])

    def __str__(self):
        return ",".join(str(s) for s in self.sizes)


# ============================================================================
# SAMPLE
# ============================================================================

@dataclass
class GroupedSample:
    data: np.ndarray
    structure: GroupStructure
    column_labels: list = None
    row_labels: list = None
    tied_columns: tuple = field(init=False, default=())

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValidationError("sample data must be a 2-d matrix")
        n, q = self.data.shape
        if q != self.structure.q:
            raise GroupStructureError(f"groups {self.structure} cover {self.structure.q} columns, data has {q}")
        if n < 2:
            raise InsufficientSampleError(f"need at least 2 observations, got {n}")
        if np.isnan(self.data).any():
            raise MissingValueError("sample contains missing values")
        if self.column_labels is None:
            self.column_labels = [f"X{j + 1}" for j in range(q)]
        self.column_labels = [str(c) for c in self.column_labels]
        if len(self.column_labels) != q:
            raise ValidationError("column_labels length does not match data")
        if self.row_labels is not None and len(self.row_labels) != n:
            raise ValidationError("row_labels length does not match data")
        tied = []
        for j in range(q):
            if np.unique(self.data[:, j]).size < n:
                tied.append(self.column_labels[j])
        self.tied_columns = tuple(tied)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def q(self):
        return self.data.shape[1]

    def row_label(self, i):
        if self.row_labels is None:
            return str(i + 1)
        return str(self.row_labels[i])

    def rows(self, start, stop):
        labels = None if self.row_labels is None else list(self.row_labels[start:stop])
        return GroupedSample(self.data[start:stop], self.structure, list(self.column_labels), labels)

    def select_groups(self, groups):
        groups = list(groups)
        if any(g < 0 or g >= self.structure.k for g in groups):
            raise GroupStructureError(f"group index out of range: {groups}")
        cols = self.structure.columns_of(groups)
        return GroupedSample(
            self.data[:, cols],
            self.structure.subset(groups),
            [self.column_labels[c] for c in cols],
            None if self.row_labels is None else list(self.row_labels),
        )


# ============================================================================
# BLOCK CORRELATION MATRIX
# ============================================================================

@dataclass
class BlockCorrelationMatrix:
    entries: np.ndarray
    structure: GroupStructure

    def __post_init__(self):
        r = np.array(self.entries, dtype=float)
        q = self.structure.q
        if r.shape != (q, q):
            raise GroupStructureError(f"matrix shape {r.shape} does not match groups {self.structure}")
        if not np.allclose(r, r.T, atol=1e-12, rtol=0.0):
            raise ValidationError("correlation matrix must be symmetric")
        if np.any(np.abs(np.diag(r) - 1.0) > 1e-12):
            raise ValidationError("correlation matrix must have unit diagonal")
        if np.any(np.abs(r) > 1.0 + 1e-12):
            raise ValidationError("correlation entries must lie in [-1, 1]")
        if np.linalg.eigvalsh(r).min() < -1e-10:
            raise ValidationError("correlation matrix is not positive semidefinite")
        r = 0.5 * (r + r.T)
        np.fill_diagonal(r, 1.0)
        self.entries = np.clip(r, -1.0, 1.0)

    @classmethod
    def from_covariance(cls, sigma, structure):
        sigma = np.asarray(sigma, dtype=float)
        d = np.sqrt(np.diag(sigma))
        if np.any(d <= 0):
            raise ValidationError("covariance has a nonpositive variance")
        return cls(sigma / np.outer(d, d), structure)

    @classmethod
    def from_dict(cls, payload):
        try:
            return cls(np.asarray(payload["matrix"], dtype=float), GroupStructure(tuple(payload["sizes"])))
        except KeyError as exc:
            raise ValidationError(f"correlation JSON missing key {exc}") from None

    @property
    def q(self):
        return self.structure.q

    @property
    def r0(self):
        return self.structure.block_diagonal(self.entries)

    def block(self, i, j):
        sl = self.structure.slices
        return self.entries[sl[i], sl[j]]

    def is_block_diagonal(self):
        return bool(np.all(self.entries[~self.structure.block_mask()] == 0.0))

    def to_dict(self):
        return {"sizes": list(self.structure.sizes), "matrix": self.entries.tolist()}


# ============================================================================
# RANKS AND NORMAL SCORES
# ============================================================================

def ranks(column, ties="strict"):
    """Ranks 1..n; ties raise in strict mode and get midranks otherwise."""
    if ties not in TIE_POLICIES:
        raise ValidationError(f"unknown tie policy {ties!r}")
    x = np.asarray(column, dtype=float)
    if ties == "strict":
        if np.unique(x).size < x.size:
            raise TieError("column has tied values; use midrank tie handling for real data")
        return rankdata(x, method="ordinal").astype(float)
    return rankdata(x, method="average")


def normal_scores(column, ties="strict"):
    """phi^{-1}(rank / (n + 1)) for each observation."""
    x = np.asarray(column, dtype=float)
    n = x.size
    if n < 2:
        raise InsufficientSampleError("normal scores need n >= 2")
    r = ranks(x, ties)
    # evaluate the quantile on the lower half only so that mirrored ranks give
    # exactly negated scores
    mirrored = (n + 1.0) - r
    lower = np.minimum(r, mirrored)
    s = ndtri(lower / (n + 1.0))
    return np.where(r > mirrored, -s, s)


def score_matrix(sample, ties="strict"):
    data = sample.data
    for j in range(sample.q):
        if np.ptp(data[:, j]) == 0:
            raise DegenerateColumnError(f"column {sample.column_labels[j]!r} is constant")
    return np.column_stack([normal_scores(data[:, j], ties) for j in range(sample.q)])


def normal_scores_correlation(sample, ties="strict"):
    """Pearson correlation of the normal scores, as a BlockCorrelationMatrix."""
    if sample.n < 3:
        raise InsufficientSampleError("normal-scores correlation needs n >= 3")
    z = score_matrix(sample, ties)
    gram = z.T @ z
    d = np.diag(gram)
    r = np.clip(gram / np.sqrt(np.outer(d, d)), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return BlockCorrelationMatrix(r, sample.structure)


# ============================================================================
# PRICES, CSV INGESTION, WINDOWS
# ============================================================================

def log_returns(prices, policy="drop-row", structure=None, column_labels=None, row_labels=None):
    """Daily log-returns; a return is missing when either price is missing."""
    if policy not in MISSING_POLICIES:
        raise ValidationError(f"unknown missing-value policy {policy!r}")
    p = np.asarray(prices, dtype=float)
    if p.ndim != 2 or p.shape[0] < 2:
        raise InsufficientSampleError("log-returns need at least two price rows")
    observed = ~np.isnan(p)
    if np.any(p[observed] <= 0):
        raise DomainError("prices must be strictly positive")
    with np.errstate(invalid="ignore"):
        ret = np.diff(np.log(p), axis=0)
    keep = ~np.isnan(ret).any(axis=1)
    if not keep.all():
        if policy == "error":
            raise MissingValueError(f"{int((~keep).sum())} return rows have missing prices")
        logger.info("Dropping %d return rows with missing prices", int((~keep).sum()))
    labels = None if row_labels is None else [row_labels[i + 1] for i in np.flatnonzero(keep)]
    structure = structure or GroupStructure((p.shape[1],))
    return GroupedSample(ret[keep], structure, column_labels, labels)


def _date_labels(series):
    if pd.api.types.is_numeric_dtype(series):
        return None
    parsed = pd.to_datetime(series, errors="coerce")
    if parsed.isna().any():
        return None
    return [d.strftime("%Y-%m-%d") for d in parsed]


def read_grouped_csv(path, groups, missing="drop-row", log_return=False):
    """Load a CSV (optional leading date column) into a GroupedSample."""
    if missing not in MISSING_POLICIES:
        raise ValidationError(f"unknown missing-value policy {missing!r}")
    structure = GroupStructure.parse(groups)
    df = pd.read_csv(path, na_values=NA_VALUES, keep_default_na=False)
    logger.info("Loaded %s: %d rows, %d columns", path, len(df), df.shape[1])

    row_labels = None
    if df.shape[1] > 0:
        row_labels = _date_labels(df.iloc[:, 0])
        if row_labels is not None:
            df = df.iloc[:, 1:]
    numeric = df.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & df.notna()
    if bad.any().any():
        col = bad.any().idxmax()
        raise ValidationError(f"non-numeric value in column {col!r}")
    if numeric.shape[1] != structure.q:
        raise GroupStructureError(f"groups {structure} cover {structure.q} columns, CSV has {numeric.shape[1]}")
    labels = [str(c) for c in numeric.columns]
    values = numeric.to_numpy(dtype=float)

    if log_return:
        return log_returns(values, missing, structure, labels, row_labels)

    keep = ~np.isnan(values).any(axis=1)
    if not keep.all():
        if missing == "error":
            raise MissingValueError(f"{int((~keep).sum())} rows have missing values")
        logger.info("Dropping %d rows with missing values", int((~keep).sum()))
        values = values[keep]
        if row_labels is not None:
            row_labels = [lab for lab, k in zip(row_labels, keep) if k]
    sample = GroupedSample(values, structure, labels, row_labels)
    if sample.tied_columns:
        logger.warning("Tied values in columns: %s", ", ".join(sample.tied_columns))
    return sample


def rolling_windows(sample, window, step):
    """(start_index, sub-sample) pairs with 0-based starts 0, step, 2*step, ...

    The last window is stretched to the final row when the regular grid
    stops short of it.
    """
    n = sample.n
    if step < 1 or window < 2:
        raise ValidationError("window must be >= 2 and step >= 1")
    if window > n:
        raise WindowTooLargeError(f"window {window} exceeds sample size {n}")
    starts = list(range(0, n - window + 1, step))
    out = []
    for idx, start in enumerate(starts):
        stop = start + window
        if idx == len(starts) - 1:
            stop = n
        out.append((start, sample.rows(start, stop)))
    return out
