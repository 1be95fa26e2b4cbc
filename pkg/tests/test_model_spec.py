import json

import numpy as np
import pytest

from copula_models import ArchimedeanCopula, GaussianCopula, NestedArchimedeanCopula
from errors import DomainError, NestingConditionError, SpecParseError, ValidationError
from model_spec import ModelSpecParser, parse_model


def test_archimedean_spec():
    model = parse_model("gumbel(th=3,d=2)")
    assert isinstance(model, ArchimedeanCopula)
    assert model.generator.theta == 3.0
    assert model.structure.sizes == (2,)


def test_archimedean_spec_with_groups():
    model = parse_model("Clayton( th = 2 , d = 3 )", groups="1,2")
    assert model.name == "clayton"
    assert model.structure.sizes == (1, 2)
    with pytest.raises(ValidationError):
        parse_model("clayton(th=2,d=3)", groups="2,2")


def test_nested_spec():
    model = parse_model("nested-gumbel(th0=3; th1=3,d1=2; th2=4,d2=2)")
    assert isinstance(model, NestedArchimedeanCopula)
    np.testing.assert_array_equal(model.parameters(), [3.0, 3.0, 4.0])
    assert model.structure.sizes == (2, 2)


def test_nested_spec_three_children():
    model = parse_model("nested-clayton(th0=1; th1=2,d1=2; th2=3,d2=1; th3=4,d3=3)", groups="2,1,3")
    assert model.q == 6
    assert [d for _, d in model.children] == [2, 1, 3]


def test_gaussian_spec(tmp_path):
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"sizes": [1, 1], "matrix": [[1.0, 0.4], [0.4, 1.0]]}))
    model = parse_model(f"gaussian:{path}")
    assert isinstance(model, GaussianCopula)
    assert model.r.entries[0, 1] == 0.4


def test_gaussian_spec_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_model(f"gaussian:{tmp_path / 'absent.json'}")


@pytest.mark.parametrize("text", [
    "gumbel",
    "frank(th=2,d=2)",
    "gumbel(th=abc,d=2)",
    "gumbel(d=2)",
    "nested-gumbel(th0=2)",
    "nested-frank(th0=1; th1=2,d1=2)",
    "gumbel(th=2;;d)",
])
def test_malformed_specs(text):
    with pytest.raises(SpecParseError):
        parse_model(text)


def test_parameter_errors_pass_through():
    with pytest.raises(DomainError):
        parse_model("gumbel(th=0.5,d=2)")
    with pytest.raises(NestingConditionError):
        parse_model("nested-gumbel(th0=5; th1=3,d1=2; th2=4,d2=2)")


def test_split_args():
    parser = ModelSpecParser()
    assert parser.split_args("th0=3; th1=3,d1=2") == [{"th0": "3"}, {"th1": "3", "d1": "2"}]
