import numpy as np
import pandas as pd

from validation import SampleValidator


def _run(path, groups, **kwargs):
    validator = SampleValidator(path, groups, **kwargs)
    validator.load_data()
    validator.verify_data()
    return validator


def _checks(validator, level):
    return [i["check"] for i in validator.issues[level]]


def test_clean_file(write_csv, correlated_frame):
    validator = _run(write_csv(correlated_frame), "2,2")
    assert validator.ok
    report = validator.generate_report()
    assert report["n"] == 300 and report["q"] == 4
    assert not report["dated"]
    assert [c["group"] for c in report["columns"]] == [1, 1, 2, 2]
    assert report["issues"] == []


def test_group_mismatch(write_csv, correlated_frame):
    validator = _run(write_csv(correlated_frame), "2,1")
    assert not validator.ok
    assert _checks(validator, "error") == ["groups"]


def test_reports_every_problem(write_csv, correlated_frame):
    df = correlated_frame.copy()
    df["a2"] = 1.0
    df["b1"] = df["b1"].round(1)
    df = df.astype(object)
    df.iloc[3, 0] = "n/a"
    validator = _run(write_csv(df), "2,2")
    errors = _checks(validator, "error")
    assert "numeric" in errors and "constant" in errors
    assert "ties" in _checks(validator, "warning")
    assert validator.sample is None


def test_missing_values_follow_policy(write_csv, correlated_frame):
    df = correlated_frame.copy()
    df.iloc[5, 2] = np.nan
    path = write_csv(df)
    dropped = _run(path, "2,2")
    assert dropped.ok
    assert _checks(dropped, "warning") == ["missing"]
    assert dropped.sample.n == 299
    strict = _run(path, "2,2", missing="error")
    assert _checks(strict, "error") == ["missing"]


def test_prices_and_dates(write_csv):
    dates = pd.date_range("2021-03-01", periods=40).strftime("%Y-%m-%d")
    rng = np.random.default_rng(2)
    prices = np.exp(np.cumsum(rng.normal(0, 0.01, (40, 2)), axis=0)) * 100
    prices[7, 1] = -1.0
    df = pd.DataFrame({"date": dates, "p1": prices[:, 0], "p2": prices[:, 1]})
    validator = _run(write_csv(df), "1,1", log_return=True)
    assert validator.generate_report()["dated"]
    assert "prices" in _checks(validator, "error")


def test_too_few_rows(write_csv):
    df = pd.DataFrame({"a": [1.0, 2.0, 3.0], "b": [3.0, 1.0, 2.0], "c": [2.0, 3.0, 1.0]})
    validator = _run(write_csv(df), "1,2")
    assert _checks(validator, "error") == ["size"]


def test_issues_frame(write_csv, correlated_frame):
    validator = _run(write_csv(correlated_frame), "3,3")
    frame = validator.issues_frame()
    assert list(frame.columns) == ["level", "check", "column", "rows", "message"]
    assert frame["level"].tolist() == ["error"]
