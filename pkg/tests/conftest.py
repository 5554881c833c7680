import numpy as np
import pytest

from services.dataset import ExpressionMatrix, default_labels, write_csv
from services.netgen import sample_data, simulate_pcor_density


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def regression_problem(rng, n, q, noise=0.5):
    """Centered predictors and response with a dense random coefficient vector."""
    Z = rng.standard_normal((n, q))
    Z -= Z.mean(axis=0)
    y = Z @ rng.standard_normal(q) + noise * rng.standard_normal(n)
    return Z, y - y.mean()


@pytest.fixture
def network_data():
    """p=20 network with 10% density and 40 samples drawn from it."""
    truth = simulate_pcor_density(20, 0.1, seed=7)
    return truth, sample_data(truth, 40, seed=8)


@pytest.fixture
def network_csv(tmp_path, network_data):
    _, X = network_data
    return write_csv(X, tmp_path / "expression.csv")


def matrix(values) -> ExpressionMatrix:
    values = np.asarray(values, dtype=float)
    return ExpressionMatrix(values=values, gene_labels=default_labels(values.shape[1]))
