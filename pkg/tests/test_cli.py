import json

import numpy as np
import pandas as pd
import pytest

from cli import RunConfig, _clean, build_parser, config_from_args, main
from copula_models import ArchimedeanCopula, ArchimedeanGenerator
from errors import ValidationError
from gaussian_phi import hellinger_gaussian
from grouped_data import GroupStructure, normal_scores_correlation, read_grouped_csv


@pytest.fixture
def data_csv(write_csv, correlated_frame):
    return write_csv(correlated_frame)


def _json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def test_validate_ok(data_csv, tmp_path):
    out = tmp_path / "report.json"
    assert main(["validate", "--input", data_csv, "--groups", "2,2", "--out", str(out)]) == 0
    report = _json(out)
    assert report["ok"] is True
    assert "wall_clock" in report["provenance"]


def test_validate_errors_exit_two(write_csv, correlated_frame, tmp_path):
    df = correlated_frame.copy()
    df["a1"] = 0.0
    out = tmp_path / "report.json"
    assert main(["validate", "--input", write_csv(df), "--groups", "2,2", "--out", str(out)]) == 2
    assert _json(out)["ok"] is False


def test_estimate_hellinger_matches_closed_form(data_csv, tmp_path):
    out = tmp_path / "est.json"
    code = main(["estimate", "--input", data_csv, "--groups", "2,2", "--phi", "hellinger",
                 "--out", str(out), "--reproducible"])
    assert code == 0
    payload = _json(out)
    r = normal_scores_correlation(read_grouped_csv(data_csv, "2,2"))
    assert payload["value"] == pytest.approx(hellinger_gaussian(r), rel=1e-12)
    assert payload["ci"][0] < payload["value"]
    assert {"normalized_value", "sd", "n", "phi", "method"} <= payload.keys()
    assert "estimate" not in payload
    assert payload["correlation"]["sizes"] == [2, 2]
    assert "wall_clock" not in payload["provenance"]
    assert payload["provenance"]["config"]["phi"] == "hellinger"


def test_estimate_archimedean(write_csv, tmp_path):
    model = ArchimedeanCopula(ArchimedeanGenerator("gumbel", 3.0), GroupStructure((1, 1)))
    path = write_csv(pd.DataFrame(model.sample(300, 1, threads=1), columns=["x", "y"]))
    out = tmp_path / "est.json"
    code = main(["estimate", "--input", path, "--groups", "1,1", "--copula", "gumbel", "--phi", "hellinger",
                 "--mc-samples", "5000", "--out", str(out)])
    assert code == 0
    payload = _json(out)
    assert payload["estimator_form"] == "hellinger-reduced"
    assert payload["model"]["family"] == "gumbel"
    assert 0.0 <= payload["normalized_value"] <= 1.0


def test_fit_command(write_csv, tmp_path):
    model = ArchimedeanCopula(ArchimedeanGenerator("clayton", 2.0), GroupStructure((1, 1)))
    path = write_csv(pd.DataFrame(model.sample(300, 2, threads=1), columns=["x", "y"]))
    out = tmp_path / "fit.json"
    assert main(["fit", "--input", path, "--groups", "1,1", "--copula", "clayton", "--out", str(out)]) == 0
    assert _json(out)["fit"]["theta_hat"][0] == pytest.approx(2.0, abs=0.6)


def test_simulate_is_reproducible(tmp_path):
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        code = main(["simulate", "--copula", "nested-clayton(th0=1; th1=2,d1=2; th2=3,d2=2)", "--m", "200",
                     "--seed", "7", "--out", str(out)])
        assert code == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    df = pd.read_csv(outs[0])
    assert list(df.columns) == ["X1", "X2", "X3", "X4"]
    assert len(df) == 200
    assert ((df > 0) & (df < 1)).all().all()


def test_simulate_normal_scale(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["simulate", "--copula", "gumbel(th=2,d=2)", "--m", "100", "--scale", "normal",
                 "--out", str(out)]) == 0
    assert (pd.read_csv(out) < 0).any().any()


def test_rolling_csv(data_csv, tmp_path):
    out = tmp_path / "roll.csv"
    code = main(["rolling", "--input", data_csv, "--groups", "2,2", "--window", "100", "--step", "50",
                 "--format", "csv", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out)
    assert len(df) == 5
    assert df["groups"].eq("all").all()
    assert bool(df["short_window"].iloc[-1]) is False


def test_contagion_json(data_csv, tmp_path):
    out = tmp_path / "c.json"
    code = main(["contagion", "--input", data_csv, "--groups", "2,1,1", "--pairwise",
                 "--period1", "1:100", "--period2", "101:200", "--period3", "201:300", "--out", str(out)])
    assert code == 0
    payload = _json(out)
    assert payload["phi"] == "mutual-information"
    assert len(payload["tests"]) == 3


def test_missing_input_exits_two(tmp_path, capsys):
    code = main(["estimate", "--input", str(tmp_path / "absent.csv"), "--groups", "2,2"])
    assert code == 2
    assert "phidep: error:" in capsys.readouterr().err


def test_bad_arguments_exit_two(data_csv):
    assert main(["estimate", "--input", data_csv, "--groups", "2,1"]) == 2
    assert main(["estimate", "--input", data_csv, "--groups", "2,2", "--format", "csv"]) == 2
    assert main(["estimate", "--input", data_csv]) == 2
    assert main(["estimate", "--input", data_csv, "--groups", "2,2", "--phi", "renyi"]) == 2
    assert main(["frobnicate"]) == 2


def test_singular_group_exits_three(write_csv, correlated_frame):
    df = correlated_frame.copy()
    df["a2"] = df["a1"] * 2.0
    assert main(["estimate", "--input", write_csv(df), "--groups", "2,2"]) == 3


def test_config_file(data_csv, tmp_path):
    cfg = tmp_path / "phidep.toml"
    cfg.write_text('phi = "hellinger"\nseed = 99\n')
    args = build_parser().parse_args(["estimate", "--input", data_csv, "--groups", "2,2", "--config", str(cfg),
                                      "--seed", "5"])
    config = config_from_args(args)
    assert config.phi == "hellinger"
    assert config.seed == 5

    bad = tmp_path / "bad.toml"
    bad.write_text("colour = 1\n")
    assert main(["estimate", "--input", data_csv, "--groups", "2,2", "--config", str(bad)]) == 2


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("PHIDEP_SEED", "314")
    assert RunConfig("simulate", copula="gumbel(th=2,d=2)").seed == 314
    monkeypatch.setenv("PHIDEP_SEED", "pi")
    with pytest.raises(ValidationError):
        RunConfig("simulate")


def test_clean_replaces_non_finite():
    assert _clean({"a": np.float64("inf"), "b": [np.int64(2), np.nan], "c": np.array([1.5])}) == \
        {"a": None, "b": [2, None], "c": [1.5]}


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "phidep" in capsys.readouterr().out
