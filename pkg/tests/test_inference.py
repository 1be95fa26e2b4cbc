import math

import numpy as np
import pandas as pd
import pytest

from copula_models import ArchimedeanCopula, ArchimedeanGenerator
from errors import InfiniteEstimateError, InsufficientSampleError, ValidationError
from gaussian_phi import GaussianDependenceResult, estimate_gaussian
from grouped_data import GroupStructure, GroupedSample
from inference import (
    Direction,
    ar1_matrix,
    contagion_analysis,
    contagion_test,
    empirical_zeta,
    equicorrelated_matrix,
    gaussian_setting,
    group_pairs,
    replicate_estimates,
    resolve_period,
    rolling_dependence,
    rolling_pairwise,
    studentized_replicates,
)
from phi_functions import MUTUAL_INFORMATION, TOTAL_VARIATION


def _estimate(value, sd, n):
    return GaussianDependenceResult(value, value, sd, MUTUAL_INFORMATION, None, n)


@pytest.fixture
def dated_sample(correlated_frame):
    labels = [d.strftime("%Y-%m-%d") for d in pd.date_range("2020-01-01", periods=len(correlated_frame))]
    return GroupedSample(correlated_frame.to_numpy(), GroupStructure((2, 2)), list(correlated_frame.columns), labels)


# ----------------------------------------------------------------------------
# contagion tests
# ----------------------------------------------------------------------------

def test_equal_estimates_give_half():
    res = contagion_test(_estimate(0.3, 0.5, 200), _estimate(0.3, 0.5, 200), Direction.INCREASE_INTO_CRISIS)
    assert res.z == 0.0
    assert res.p_value == 0.5


def test_large_increase_is_significant():
    res = contagion_test(_estimate(0.2, 0.5, 400), _estimate(0.5, 0.5, 400), "increase-into-crisis")
    assert res.z == pytest.approx(-8.485, abs=1e-3)
    assert res.p_value < 1e-15
    after = contagion_test(_estimate(0.2, 0.5, 400), _estimate(0.5, 0.5, 400), Direction.DECREASE_AFTER_CRISIS)
    assert after.p_value == pytest.approx(1.0)


def test_swapping_periods_negates_z():
    a, b = _estimate(0.25, 0.4, 150), _estimate(0.1, 0.6, 300)
    forward = contagion_test(a, b, Direction.INCREASE_INTO_CRISIS)
    backward = contagion_test(b, a, Direction.INCREASE_INTO_CRISIS)
    assert forward.z == -backward.z
    assert forward.p_value + backward.p_value == pytest.approx(1.0)


def test_infinite_estimates_are_rejected():
    singular = GaussianDependenceResult(math.inf, 1.0, None, MUTUAL_INFORMATION, None, 100, singular=True)
    with pytest.raises(InfiniteEstimateError):
        contagion_test(singular, _estimate(0.2, 0.5, 100), Direction.INCREASE_INTO_CRISIS)
    with pytest.raises(InfiniteEstimateError):
        contagion_test(_estimate(0.2, None, 100), _estimate(0.2, 0.5, 100), Direction.INCREASE_INTO_CRISIS)
    with pytest.raises(ValidationError):
        contagion_test(_estimate(0.2, 0.0, 100), _estimate(0.2, 0.0, 100), Direction.INCREASE_INTO_CRISIS)


def test_result_dict():
    res = contagion_test(_estimate(0.2, 0.5, 100), _estimate(0.3, 0.5, 120), Direction.INCREASE_INTO_CRISIS)
    out = res.to_dict()
    assert out["direction"] == "increase-into-crisis"
    assert (out["n1"], out["n2"]) == (100, 120)
    assert len(out["estimates"]) == 2


def test_resolve_period(dated_sample):
    assert resolve_period(dated_sample, "1:10") == (0, 10)
    assert resolve_period(dated_sample, "2020-01-05:2020-01-09") == (4, 9)
    for bad in ("0:5", "10:5", "1:301", "yesterday", "2021-01-01:2021-02-01"):
        with pytest.raises(ValidationError):
            resolve_period(dated_sample, bad)


def test_date_periods_need_labels(correlated_frame):
    sample = GroupedSample(correlated_frame.to_numpy(), GroupStructure((2, 2)))
    with pytest.raises(ValidationError):
        resolve_period(sample, "2020-01-01:2020-02-01")


def test_group_pairs():
    assert group_pairs(3) == [(0, 1), (0, 2), (1, 2)]


def test_contagion_analysis(dated_sample):
    report = contagion_analysis(dated_sample, ["1:100", "101:200", "201:300"], MUTUAL_INFORMATION)
    assert len(report) == 1
    entry = report[0]
    assert entry["groups"] == [1, 2]
    assert [p["rows"] for p in entry["periods"]] == [[1, 100], [101, 200], [201, 300]]
    assert 0.0 <= entry["p12"]["p_value"] <= 1.0
    expected = contagion_test(estimate_gaussian(dated_sample.rows(0, 100), MUTUAL_INFORMATION),
                              estimate_gaussian(dated_sample.rows(100, 200), MUTUAL_INFORMATION),
                              Direction.INCREASE_INTO_CRISIS)
    assert entry["p12"]["z"] == pytest.approx(expected.z)


def test_contagion_analysis_pairwise(correlated_frame):
    sample = GroupedSample(correlated_frame.to_numpy(), GroupStructure((2, 1, 1)))
    report = contagion_analysis(sample, [(0, 100), (100, 200), (200, 300)], MUTUAL_INFORMATION, pairwise=True)
    assert [e["groups"] for e in report] == [[1, 2], [1, 3], [2, 3]]


def test_contagion_without_sd_reports_error(dated_sample):
    report = contagion_analysis(dated_sample, ["1:100", "101:200", "201:300"], TOTAL_VARIATION)
    assert report[0]["p12"]["z"] is None
    assert "error" in report[0]["p12"]


def test_contagion_needs_three_periods(dated_sample):
    with pytest.raises(ValidationError):
        contagion_analysis(dated_sample, ["1:100", "101:200"], MUTUAL_INFORMATION)


# ----------------------------------------------------------------------------
# rolling windows
# ----------------------------------------------------------------------------

def test_rolling_matches_slice_estimates(dated_sample):
    series = rolling_dependence(dated_sample, window=100, step=100, phi=MUTUAL_INFORMATION)
    assert [e.start_index for e in series.entries] == [0, 100, 200]
    assert [e.label for e in series.entries] == ["2020-01-01", "2020-04-10", "2020-07-19"]
    for entry in series.entries:
        direct = estimate_gaussian(dated_sample.rows(entry.start_index, entry.start_index + 100), MUTUAL_INFORMATION)
        assert entry.value == pytest.approx(direct.value, rel=1e-12)
        assert entry.ci_lo < entry.value < entry.ci_hi
        assert not entry.short_window


def test_rolling_stretches_last_window(rng):
    sample = GroupedSample(rng.standard_normal((1099, 2)), GroupStructure((1, 1)))
    series = rolling_dependence(sample, window=101, step=10, phi=MUTUAL_INFORMATION, threads=2)
    assert len(series.entries) == 100
    assert series.entries[-1].start_index == 990
    assert series.entries[-1].n == 109
    assert series.entries[-1].short_window
    assert not any(e.short_window for e in series.entries[:-1])
    out = series.to_dict()
    assert len(out["values"]) == 100
    assert out["labels"][0] == "1"


def test_rolling_flags_singular_windows(rng):
    x = rng.standard_normal(60)
    sample = GroupedSample(np.column_stack([x, x]), GroupStructure((1, 1)))
    series = rolling_dependence(sample, window=30, step=30, phi=MUTUAL_INFORMATION)
    assert all(e.singular for e in series.entries)
    assert series.to_dict()["values"] == [None, None]


def test_rolling_window_too_small(dated_sample):
    with pytest.raises(InsufficientSampleError):
        rolling_dependence(dated_sample, window=5, step=1, phi=MUTUAL_INFORMATION)


def test_rolling_pairwise(correlated_frame):
    sample = GroupedSample(correlated_frame.to_numpy(), GroupStructure((2, 1, 1)))
    out = rolling_pairwise(sample, window=150, step=150, phi=MUTUAL_INFORMATION)
    assert [s.groups for s in out] == [[1, 2], [1, 3], [2, 3]]
    assert out[0].to_dict()["groups"] == [1, 2]
    assert list(out[0].to_frame().columns)[:3] == ["label", "start_index", "n"]


# ----------------------------------------------------------------------------
# simulation settings
# ----------------------------------------------------------------------------

def test_matrices():
    np.testing.assert_allclose(ar1_matrix(3, 0.5), [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    eq = equicorrelated_matrix(3, 0.2)
    assert np.all(np.diag(eq) == 1.0) and eq[0, 2] == 0.2


def test_gaussian_settings():
    model, marginals = gaussian_setting(1)
    assert model.structure.sizes == (2, 2) and marginals is None
    model, marginals = gaussian_setting(2)
    assert len(marginals) == 4
    model, _ = gaussian_setting(3)
    assert model.r.entries[0, 1] == pytest.approx(0.8)
    model, _ = gaussian_setting(4)
    assert model.structure.sizes == (4, 5, 3, 1, 2)
    with pytest.raises(ValidationError):
        gaussian_setting(5)


def test_replicates():
    model, marginals = gaussian_setting(2)
    values, sds = replicate_estimates(model, MUTUAL_INFORMATION, n=200, n_reps=6, seed=1, marginals=marginals,
                                      threads=2)
    assert values.shape == sds.shape == (6,)
    again, _ = replicate_estimates(model, MUTUAL_INFORMATION, n=200, n_reps=6, seed=1, marginals=marginals,
                                   threads=1)
    np.testing.assert_array_equal(values, again)
    z = studentized_replicates(model, MUTUAL_INFORMATION, n=200, n_reps=6, seed=1, marginals=marginals)
    assert z.shape == (6,) and np.all(np.isfinite(z))
    assert empirical_zeta(model, MUTUAL_INFORMATION, n=200, n_reps=6, seed=1) > 0


def test_replicates_need_gaussian_model():
    model = ArchimedeanCopula(ArchimedeanGenerator("gumbel", 2.0), GroupStructure((1, 1)))
    with pytest.raises(ValidationError):
        replicate_estimates(model, MUTUAL_INFORMATION, n=50, n_reps=2)
