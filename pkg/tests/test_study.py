"""Scaled-down simulation studies; run with ``pytest -m slow``."""
import numpy as np
import pytest

from commands.config import Command, RunConfig
from commands.simulate import _score_cell, cell_data, estimation_seed, run_cells
from services.errors import KappaUndefined
from services.ggm import estimate_network
from services.methods import Method
from services.metrics import subsample_stability
from services.netgen import ScenarioGrid, Topology, TopologyKind, sample_data, simulate_pcor_density

pytestmark = pytest.mark.slow

DENSITY = [Topology(kind=TopologyKind.DENSITY, value=0.05)]


def test_adaptive_lasso_is_sparser_per_cell():
    grid = ScenarioGrid(p=40, sample_sizes=[30, 60], replications=10, topologies=DENSITY, root_seed=0)
    sparser = 0
    cells = list(grid.cells())
    for cell in cells:
        _, data = cell_data(cell, grid)
        counts = {
            method: np.count_nonzero(estimate_network(data, method, 5, estimation_seed(grid, cell)).pcor.upper())
            for method in (Method.LASSO, Method.ADALASSO)
        }
        sparser += counts[Method.ADALASSO] <= counts[Method.LASSO]
    assert sparser >= 0.9 * len(cells)


def test_method_ordering_on_small_networks(tmp_path):
    grid = ScenarioGrid(p=40, sample_sizes=[30, 60, 120], replications=10, topologies=DENSITY, root_seed=1)
    config = RunConfig(command=Command.SIMULATE, out=tmp_path, jobs=-1)
    report = run_cells(_score_cell, grid, config)
    assert (report["status"] == "ok").all()
    means = report.astype({"power": float, "tdr": float}).groupby("method")[["power", "tdr", "n_selected"]].mean()

    assert means.loc["lasso", "tdr"] < means.loc["adalasso", "tdr"]
    for method in ("shrink", "pls", "ridge"):
        assert means.loc["lasso", "power"] >= means.loc[method, "power"]
    true_edges = round(0.05 * 40 * 39 / 2)
    assert means.loc["shrink", "n_selected"] < true_edges
    assert means.loc["ridge", "n_selected"] < true_edges


def test_shrinkage_is_the_most_stable():
    regression_methods = (Method.PLS, Method.RIDGE, Method.LASSO, Method.ADALASSO)
    wins = 0
    for trial in range(10):
        X = sample_data(simulate_pcor_density(30, 0.1, seed=trial), 40, seed=100 + trial)

        def kappa(method):
            try:
                return subsample_stability(X, method, R=10, seed=trial, jobs=-1).kappa
            except KappaUndefined:
                return None

        shrink = kappa(Method.SHRINK)
        others = [k for k in (kappa(m) for m in regression_methods) if k is not None]
        wins += shrink is not None and bool(others) and shrink >= np.mean(others)
    assert wins >= 7
