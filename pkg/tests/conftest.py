import os
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from gaussian_phi import paired_block_matrix  # noqa: E402
from grouped_data import BlockCorrelationMatrix, GroupStructure  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def paired_block():
    return paired_block_matrix


@pytest.fixture
def bivariate():
    def _make(rho):
        return BlockCorrelationMatrix(np.array([[1.0, rho], [rho, 1.0]]), GroupStructure((1, 1)))
    return _make


@pytest.fixture
def write_csv(tmp_path):
    def _write(df, name="data.csv"):
        path = tmp_path / name
        df.to_csv(path, index=False)
        return str(path)
    return _write


@pytest.fixture
def correlated_frame(rng):
    """300 rows of 4 Gaussian columns with AR(1) correlation 0.5."""
    idx = np.arange(4)
    cov = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    data = rng.multivariate_normal(np.zeros(4), cov, size=300)
    return pd.DataFrame(data, columns=["a1", "a2", "b1", "b2"])
