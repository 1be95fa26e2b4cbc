# validation.py - checks a grouped CSV before estimation and reports every
# problem found instead of stopping at the first one
import logging
from collections import defaultdict

import numpy as np
import pandas as pd

from errors import PhidepError
from grouped_data import MISSING_POLICIES, NA_VALUES, GroupStructure, _date_labels, read_grouped_csv

logger = logging.getLogger(__name__)


class SampleValidator:
    def __init__(self, input_file, groups, missing="drop-row", log_return=False):
        self.input_file = input_file
        self.structure = GroupStructure.parse(groups)
        self.missing = missing
        self.log_return = log_return

        # Containers
        self.raw = None
        self.numeric = None
        self.row_labels = None

        # Results
        self.issues = defaultdict(list)
        self.column_summary = []
        self.sample = None

    # -------------------------------------------------------------------
    # Load Data
    # -------------------------------------------------------------------
    def load_data(self):
        logger.info("Loading %s for validation...", self.input_file)
        self.raw = pd.read_csv(self.input_file, na_values=NA_VALUES, keep_default_na=False)
        df = self.raw
        if df.shape[1] > 0:
            self.row_labels = _date_labels(df.iloc[:, 0])
            if self.row_labels is not None:
                df = df.iloc[:, 1:]
        self.numeric = df.apply(pd.to_numeric, errors="coerce")
        bad = self.numeric.isna() & df.notna()
        for col in bad.columns[bad.any()]:
            self.issues["error"].append(
                {"check": "numeric", "column": str(col), "rows": int(bad[col].sum()),
                 "message": f"non-numeric values in column {col!r}"})
        logger.info("Loaded %d rows, %d value columns", len(self.numeric), self.numeric.shape[1])

    # -------------------------------------------------------------------
    # Checks
    # -------------------------------------------------------------------
    def _check_columns(self):
        if self.numeric.shape[1] != self.structure.q:
            self.issues["error"].append(
                {"check": "groups", "column": None, "rows": None,
                 "message": f"groups {self.structure} cover {self.structure.q} columns, "
                            f"CSV has {self.numeric.shape[1]}"})
            return False
        return True

    def _check_missing(self):
        missing_rows = int(self.numeric.isna().any(axis=1).sum())
        if not missing_rows:
            return
        level = "error" if self.missing == "error" else "warning"
        self.issues[level].append(
            {"check": "missing", "column": None, "rows": missing_rows,
             "message": f"{missing_rows} rows have missing values (policy {self.missing})"})

    def _check_prices(self):
        values = self.numeric.to_numpy(dtype=float)
        nonpositive = int(np.sum(values[~np.isnan(values)] <= 0))
        if nonpositive:
            self.issues["error"].append(
                {"check": "prices", "column": None, "rows": nonpositive,
                 "message": f"{nonpositive} nonpositive prices; log-returns need positive prices"})

    def _summarize_columns(self):
        group_of = self.structure.group_of()
        for j, col in enumerate(self.numeric.columns):
            values = self.numeric.iloc[:, j].dropna()
            n_unique = int(values.nunique())
            self.column_summary.append({
                "column": str(col),
                "group": int(group_of[j]) + 1,
                "observed": int(values.size),
                "unique": n_unique,
                "tied": n_unique < values.size,
                "constant": n_unique <= 1,
            })
            if values.size and n_unique <= 1:
                self.issues["error"].append(
                    {"check": "constant", "column": str(col), "rows": int(values.size),
                     "message": f"column {col!r} is constant; normal scores are undefined"})
            elif n_unique < values.size:
                self.issues["warning"].append(
                    {"check": "ties", "column": str(col), "rows": int(values.size - n_unique),
                     "message": f"column {col!r} has ties; use --ties midrank"})

    def verify_data(self):
        if self.missing not in MISSING_POLICIES:
            self.issues["error"].append({"check": "policy", "column": None, "rows": None,
                                         "message": f"unknown missing-value policy {self.missing!r}"})
            return
        if not self._check_columns():
            return
        self._check_missing()
        if self.log_return:
            self._check_prices()
        self._summarize_columns()
        if self.issues["error"]:
            logger.warning("Validation found %d errors", len(self.issues["error"]))
            return

        try:
            self.sample = read_grouped_csv(self.input_file, self.structure, self.missing, self.log_return)
        except PhidepError as exc:
            self.issues["error"].append({"check": "load", "column": None, "rows": None, "message": str(exc)})
            return
        if self.sample.n < self.sample.q + 2:
            self.issues["error"].append(
                {"check": "size", "column": None, "rows": self.sample.n,
                 "message": f"need n >= q + 2 = {self.sample.q + 2} observations, got {self.sample.n}"})
        logger.info("Validation finished: %d errors, %d warnings",
                    len(self.issues["error"]), len(self.issues["warning"]))

    # -------------------------------------------------------------------
    # Report
    # -------------------------------------------------------------------
    @property
    def ok(self):
        return not self.issues["error"]

    def issues_frame(self):
        rows = [dict(i, level=level) for level, items in self.issues.items() for i in items]
        return pd.DataFrame(rows, columns=["level", "check", "column", "rows", "message"])

    def generate_report(self):
        return {
            "ok": self.ok,
            "input": str(self.input_file),
            "groups": list(self.structure.sizes),
            "n": None if self.sample is None else self.sample.n,
            "q": self.structure.q,
            "dated": self.row_labels is not None,
            "columns": list(self.column_summary),
            "issues": [dict(i, level=level) for level, items in self.issues.items() for i in items],
        }
