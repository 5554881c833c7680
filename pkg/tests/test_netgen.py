import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from services.errors import GenerationError
from services.ggm import PartialCorrelationMatrix, pcor_from_precision
from services.netgen import (
    ScenarioGrid,
    Topology,
    TopologyKind,
    TrueNetwork,
    density_edge_count,
    group_members,
    parse_topology,
    sample_data,
    sample_null_statistics,
    simulate_pcor_density,
    simulate_pcor_topology,
)


def two_genes(rho):
    return TrueNetwork(PartialCorrelationMatrix(np.array([[1.0, rho], [rho, 1.0]])),
                       Topology(kind=TopologyKind.DENSITY, value=0.5))


# ── edge counts ────────────────────────────────────────────────────────────────

def test_density_edge_count_rounds_half_up():
    assert density_edge_count(100, 0.05) == 248
    assert simulate_pcor_density(100, 0.05, seed=0).edge_count == 248


def test_single_cluster_is_complete():
    assert simulate_pcor_topology(100, "clusters:1", seed=0).edge_count == 4950


def test_stars_connect_leaves_to_centers():
    truth = simulate_pcor_topology(99, "stars:3", seed=0)
    assert truth.edge_count == 96
    degrees = (truth.pcor.rho != 0).sum(axis=0) - 1
    assert sorted(degrees)[-3:] == [32, 32, 32]


def test_two_clusters_of_unequal_size():
    sizes = [len(members) for members in group_members(7, 2)]
    expected = sum(m * (m - 1) // 2 for m in sizes)
    assert simulate_pcor_topology(7, "clusters:2", seed=1).edge_count == expected == 9


def test_more_groups_than_genes():
    with pytest.raises(GenerationError):
        simulate_pcor_topology(3, "clusters:4", seed=0)


# ── feasibility ────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("topology", ["density:0.05", "density:0.25", "clusters:2", "stars:4"])
def test_truth_is_feasible(topology):
    truth = simulate_pcor_topology(60, topology, seed=5)
    rho = truth.pcor.rho
    assert_array_equal(rho, rho.T)
    assert_array_equal(np.diag(rho), 1.0)
    assert np.linalg.eigvalsh(truth.precision()).min() > 0
    assert np.linalg.eigvalsh(truth.correlation()).min() > 0


def test_truth_is_recovered_from_its_precision():
    truth = simulate_pcor_density(40, 0.1, seed=2)
    assert_allclose(pcor_from_precision(np.linalg.inv(truth.correlation())).rho, truth.pcor.rho, atol=1e-10)


def test_denser_networks_have_weaker_edges():
    means = []
    for density in (0.05, 0.10, 0.15, 0.20, 0.25):
        magnitudes = [np.abs(truth.pcor.upper()[truth.edges]).mean()
                      for truth in (simulate_pcor_density(100, density, seed) for seed in range(20))]
        means.append(np.mean(magnitudes))
    assert np.all(np.diff(means) < 0)


def test_generation_is_deterministic():
    first = simulate_pcor_density(30, 0.1, seed=9)
    assert_array_equal(first.pcor.rho, simulate_pcor_density(30, 0.1, seed=9).pcor.rho)
    assert not np.array_equal(first.pcor.rho, simulate_pcor_density(30, 0.1, seed=10).pcor.rho)


# ── sampling ───────────────────────────────────────────────────────────────────

def test_empty_network_samples_are_uncorrelated():
    truth = simulate_pcor_topology(5, "density:0.01", seed=0)
    assert truth.edge_count == 0
    X = sample_data(truth, 100_000, seed=1)
    assert np.max(np.abs(np.cov(X.values, rowvar=False) - np.eye(5))) < 0.02


def test_sampled_partial_correlation():
    X = sample_data(two_genes(0.5), 100_000, seed=4)
    estimate = pcor_from_precision(np.linalg.inv(np.cov(X.values, rowvar=False))).rho[0, 1]
    assert estimate == pytest.approx(0.5, abs=0.02)


def test_sampling_is_deterministic():
    truth = simulate_pcor_density(10, 0.2, seed=0)
    assert_array_equal(sample_data(truth, 25, seed=3).values, sample_data(truth, 25, seed=3).values)
    assert sample_data(truth, 25, seed=3).gene_labels[0] == "g1"


def test_null_statistics_match_the_degrees_of_freedom():
    r = sample_null_statistics(200_000, 20.0, seed=0)
    assert np.mean(r ** 2) == pytest.approx(1 / 20.0, rel=0.02)
    assert abs(np.mean(r > 0) - 0.5) < 0.01
    assert np.all(np.abs(r) < 1)


# ── topologies and grids ───────────────────────────────────────────────────────

@pytest.mark.parametrize("text,kind,value", [
    ("density:0.05", TopologyKind.DENSITY, 0.05),
    ("Clusters:2", TopologyKind.CLUSTERS, 2),
    ("stars: 3", TopologyKind.STARS, 3),
])
def test_parse_topology(text, kind, value):
    topology = parse_topology(text)
    assert (topology.kind, topology.value) == (kind, value)


@pytest.mark.parametrize("text", ["density:1.5", "density:0", "clusters:0", "stars:2.5", "ring:3", "density"])
def test_invalid_topology(text):
    with pytest.raises(ValidationError):
        parse_topology(text)


def test_topology_label_round_trip():
    assert parse_topology("clusters:2").label == "clusters:2"
    assert parse_topology(parse_topology("density:0.1").label).value == 0.1


def test_default_grid():
    grid = ScenarioGrid()
    assert grid.p == 100
    assert grid.sample_sizes == [25, 50, 75, 100, 125, 150, 175, 200]
    assert len(list(grid.cells())) == 5 * 8 * 20


def test_grid_from_json(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"p": 30, "sample_sizes": [20, 40], "replications": 2,
                                "topologies": ["clusters:2", "density:0.1"], "root_seed": 4}))
    grid = ScenarioGrid.from_json(path)
    cells = list(grid.cells())
    assert len(cells) == 8
    assert cells[0].topology.label == "clusters:2"
    assert grid.model_dump()["topologies"] == ["clusters:2", "density:0.1"]


def test_grid_rejects_empty_lists():
    with pytest.raises(ValidationError):
        ScenarioGrid(sample_sizes=[])


def test_cell_seeds_are_distinct_and_stable():
    grid = ScenarioGrid(replications=3)
    cells = list(grid.cells())
    truth_seeds = {grid.truth_seed(cell) for cell in cells}
    assert len(truth_seeds) == len(cells)
    assert grid.truth_seed(cells[0]) != grid.data_seed(cells[0])
    assert grid.truth_seed(cells[5]) == ScenarioGrid(replications=3).truth_seed(cells[5])
