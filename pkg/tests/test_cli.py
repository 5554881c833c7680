import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal
from pydantic import ValidationError

from commands.config import EXIT_ERROR, EXIT_FAILED_CELLS, EXIT_OK, Command, RunConfig
from commands.simulate import cell_data
from main import main
from services.netgen import ScenarioGrid, simulate_pcor_topology

SMALL_STUDY = ["--methods", "shrink", "--densities", "0.05", "--n", "50", "--reps", "2", "--p", "20"]


def read_tsv(path):
    return pd.read_csv(path, sep="\t")


def write_rows(path, rows):
    path.write_text("\n".join(",".join(f"{v:.6f}" for v in row) for row in rows) + "\n")
    return path


# ── simulate ───────────────────────────────────────────────────────────────────

def test_simulate_writes_one_row_per_cell(tmp_path):
    out = tmp_path / "study"
    assert main(["simulate", *SMALL_STUDY, "--out", str(out), "-q"]) == EXIT_OK
    report = read_tsv(out / "report.tsv")
    assert len(report) == 2
    assert list(report["status"]) == ["ok", "ok"]
    assert set(report["scenario"]) == {"density:0.05"}
    summary = read_tsv(out / "summary.tsv")
    assert summary.loc[0, "replications"] == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["files"] == ["report.tsv", "runtime.tsv", "summary.tsv"]
    assert "out" not in manifest["config"] and "jobs" not in manifest["config"]


def test_simulate_is_reproducible_across_worker_counts(tmp_path):
    args = ["simulate", "--methods", "shrink,ridge", "--densities", "0.1", "--n", "30", "--reps", "2", "--p", "15",
            "--seed", "5", "-q"]
    assert main([*args, "--jobs", "1", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--jobs", "2", "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("report.tsv", "summary.tsv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_the_study(tmp_path):
    assert main(["simulate", *SMALL_STUDY, "--seed", "1", "--out", str(tmp_path / "a"), "-q"]) == EXIT_OK
    assert main(["simulate", *SMALL_STUDY, "--seed", "2", "--out", str(tmp_path / "b"), "-q"]) == EXIT_OK
    assert (tmp_path / "a" / "report.tsv").read_bytes() != (tmp_path / "b" / "report.tsv").read_bytes()


def test_failed_cells_are_flagged(tmp_path):
    out = tmp_path / "capped"
    code = main(["simulate", "--methods", "shrink,lasso", "--densities", "0.1", "--n", "30", "--reps", "1",
                 "--p", "15", "--cap-genes", "5", "--out", str(out), "-q"])
    assert code == EXIT_FAILED_CELLS
    report = read_tsv(out / "report.tsv").set_index("method")
    assert report.loc["shrink", "status"] == "ok"
    assert report.loc["lasso", "status"] == "failed"
    assert pd.isna(report.loc["lasso", "mse"])


def test_grid_file_and_topologies(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"p": 15, "sample_sizes": [30], "replications": 1, "topologies": ["stars:2"]}))
    out = tmp_path / "stars"
    assert main(["simulate", "--methods", "shrink", "--grid", str(grid), "--topology", "clusters:3",
                 "--out", str(out), "-q"]) == EXIT_OK
    assert list(read_tsv(out / "report.tsv")["scenario"]) == ["clusters:3"]


@pytest.mark.parametrize("topology", ["density:0.1", "stars:2"])
def test_cell_truth_comes_from_its_topology_and_seed(topology):
    grid = ScenarioGrid(p=15, sample_sizes=[30], replications=2, topologies=[topology], root_seed=4)
    cell = list(grid.cells())[1]
    truth, data = cell_data(cell, grid)
    expected = simulate_pcor_topology(15, topology, grid.truth_seed(cell))
    assert_array_equal(truth.pcor.rho, expected.pcor.rho)
    assert truth.topology == expected.topology
    assert data.values.shape == (30, 15)


# ── roc ────────────────────────────────────────────────────────────────────────

def test_roc_curves(tmp_path):
    out = tmp_path / "roc"
    code = main(["roc", "--methods", "ridge,lasso", "--densities", "0.1", "--n", "30", "--reps", "1", "--p", "20",
                 "--thresholds", "0,0.2,1", "--out", str(out), "-q"])
    assert code == EXIT_OK
    ridge = pd.read_csv(out / "roc_ridge.csv")
    assert list(ridge.columns) == ["scenario", "n", "threshold", "sensitivity", "specificity"]
    assert list(ridge["threshold"]) == [0.0, 0.2, 1.0]
    assert (ridge.loc[0, "sensitivity"], ridge.loc[0, "specificity"]) == (0.0, 1.0)
    lasso = pd.read_csv(out / "roc_lasso.csv")
    assert len(lasso) == 1
    assert pd.isna(lasso.loc[0, "threshold"])


def test_roc_sensitivity_grows_with_the_threshold(tmp_path):
    out = tmp_path / "roc"
    thresholds = ",".join(f"{t:.2f}" for t in np.linspace(0.0, 1.0, 11))
    code = main(["roc", "--methods", "shrink,ridge", "--densities", "0.1", "--n", "30,60", "--reps", "2",
                 "--p", "20", "--thresholds", thresholds, "--out", str(out), "-q"])
    assert code == EXIT_OK
    for method in ("shrink", "ridge"):
        curve = pd.read_csv(out / f"roc_{method}.csv")
        assert len(curve) == 2 * 11
        for _, points in curve.groupby(["scenario", "n"]):
            points = points.sort_values("threshold")
            assert (np.diff(points["sensitivity"].to_numpy()) >= 0).all()
            assert (np.diff(points["specificity"].to_numpy()) <= 0).all()


# ── estimate ───────────────────────────────────────────────────────────────────

def test_estimate_without_enough_statistics_reports_pcor_only(tmp_path, rng):
    x = rng.standard_normal(10)
    data = write_rows(tmp_path / "pair.csv", np.column_stack([x, x + 0.001 * rng.standard_normal(10)]))
    out = tmp_path / "pair"
    assert main(["estimate", str(data), "--methods", "ridge", "--out", str(out), "-q"]) == EXIT_OK
    summary = json.loads((out / "ridge_summary.json").read_text())
    assert summary["edge_rule"] == "none"
    assert summary["n_selected"] is None
    pcor = pd.read_csv(out / "ridge_pcor.csv", index_col=0)
    assert pcor.loc["g1", "g2"] > 0.9
    assert not (out / "ridge_fdr.json").exists()


def test_estimate_compares_methods(tmp_path, network_csv):
    out = tmp_path / "est"
    assert main(["estimate", str(network_csv), "--header", "--methods", "shrink,ridge", "--out", str(out), "-q"]) == 0
    for name in ("shrink_pcor.csv", "shrink_edges.tsv", "shrink_fdr.json", "ridge_summary.json", "runtime.json"):
        assert (out / name).exists()
    overlap = read_tsv(out / "overlap.tsv").set_index("method")
    assert list(overlap.columns) == ["shrink", "ridge"]
    assert "% selected" in overlap.index
    summary = json.loads((out / "shrink_summary.json").read_text())
    assert summary["edge_rule"] == "fdr<0.2"
    assert 0.0 < summary["shrinkage_intensity"] <= 1.0
    edges = read_tsv(out / "shrink_edges.tsv")
    assert len(edges) == summary["n_selected"]
    assert (edges["fdr"] < 0.2).all()


def test_adaptive_lasso_selects_no_more_edges_than_lasso(tmp_path, network_csv):
    out = tmp_path / "sparse"
    assert main(["estimate", str(network_csv), "--header", "--methods", "lasso,adalasso", "--seed", "3",
                 "--out", str(out), "-q"]) == EXIT_OK
    lasso = json.loads((out / "lasso_summary.json").read_text())
    adaptive = json.loads((out / "adalasso_summary.json").read_text())
    assert lasso["edge_rule"] == "nonzero"
    assert adaptive["n_selected"] <= lasso["n_selected"]


def test_zero_variance_gene_is_an_error(tmp_path, capsys):
    data = write_rows(tmp_path / "flat.csv", [[1.0, 2.0, 5.0], [2.0, 3.0, 5.0], [3.0, 1.0, 5.0], [4.0, 4.0, 5.0]])
    assert main(["estimate", str(data), "--methods", "shrink", "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "g3" in capsys.readouterr().err


def test_gene_cap_refuses_sparse_methods(tmp_path, network_csv):
    code = main(["estimate", str(network_csv), "--header", "--methods", "lasso", "--cap-genes", "5",
                 "--out", str(tmp_path / "o"), "-q"])
    assert code == EXIT_ERROR


def test_missing_file_is_an_error(tmp_path):
    assert main(["estimate", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "o"), "-q"]) == EXIT_ERROR


@pytest.mark.parametrize("argv", [
    ["estimate", "x.csv", "--methods", "glasso"],
    ["estimate", "x.csv", "--k", "1"],
    ["estimate", "x.csv", "--k", "many"],
    ["simulate", "--densities", "1.5"],
    ["simulate", "--topology", "ring:2"],
    ["stability", "x.csv", "--R", "1"],
])
def test_usage_errors_exit_with_two(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


# ── stability ──────────────────────────────────────────────────────────────────

def test_stability_table(tmp_path, network_csv):
    out = tmp_path / "stable"
    code = main(["stability", str(network_csv), "--header", "--methods", "shrink,ridge", "--R", "2",
                 "--out", str(out), "-q"])
    assert code == EXIT_OK
    table = read_tsv(out / "stability.tsv").set_index("dataset")
    assert list(table.index) == ["expression", "mean rank"]
    assert list(table.columns) == ["shrink", "ridge"]
    kappas = table.loc["expression"].dropna()
    assert (kappas <= 1.0).all()


def test_stability_needs_ten_observations(tmp_path, rng):
    data = write_rows(tmp_path / "tiny.csv", rng.standard_normal((6, 3)))
    assert main(["stability", str(data), "--methods", "shrink", "--out", str(tmp_path / "o"), "-q"]) == EXIT_ERROR


def test_stability_refuses_datasets_with_the_same_name(tmp_path, network_csv, capsys):
    copies = []
    for folder in ("first", "second"):
        (tmp_path / folder).mkdir()
        copy = tmp_path / folder / network_csv.name
        copy.write_bytes(network_csv.read_bytes())
        copies.append(str(copy))
    out = tmp_path / "stable"
    code = main(["stability", *copies, "--header", "--methods", "shrink", "--R", "2", "--out", str(out)])
    assert code == EXIT_ERROR
    assert "repeated: expression" in capsys.readouterr().err
    assert not (out / "stability.tsv").exists()


# ── worker counts ──────────────────────────────────────────────────────────────

def output_bytes(out):
    return {path.name: path.read_bytes() for path in sorted(out.iterdir()) if not path.name.startswith("runtime")}


@pytest.mark.parametrize("command", [
    ["estimate", "{data}", "--header", "--methods", "shrink,ridge,lasso"],
    ["stability", "{data}", "--header", "--methods", "shrink,ridge", "--R", "3"],
    ["roc", "--methods", "shrink,lasso", "--densities", "0.1", "--n", "30", "--reps", "2", "--p", "20",
     "--thresholds", "0,0.1,0.2,0.5,1"],
], ids=["estimate", "stability", "roc"])
def test_outputs_do_not_depend_on_worker_count(tmp_path, network_csv, command):
    argv = [arg.format(data=network_csv) for arg in command] + ["--seed", "11", "-q"]
    assert main([*argv, "--jobs", "1", "--out", str(tmp_path / "serial")]) == EXIT_OK
    assert main([*argv, "--jobs", "4", "--out", str(tmp_path / "pooled")]) == EXIT_OK
    serial, pooled = output_bytes(tmp_path / "serial"), output_bytes(tmp_path / "pooled")
    assert "manifest.json" in serial
    assert serial.keys() == pooled.keys()
    for name, content in serial.items():
        assert pooled[name] == content, name


# ── configuration ──────────────────────────────────────────────────────────────

def test_run_config_defaults():
    config = RunConfig(command=Command.ESTIMATE)
    assert [m.value for m in config.methods] == ["shrink", "pls", "ridge", "lasso", "adalasso"]
    assert config.thresholds[0] == 0.0 and config.thresholds[-1] == 1.0 and len(config.thresholds) == 21
    assert config.folds_for(40) == 5
    assert RunConfig(command=Command.ESTIMATE, k="loo").folds_for(9) == 9


@pytest.mark.parametrize("fields", [dict(k=1), dict(fdr_threshold=0.0), dict(jobs=0), dict(thresholds=[1.5]),
                                    dict(methods=[]), dict(drop_fraction=0.5)])
def test_run_config_rejects(fields):
    with pytest.raises(ValidationError):
        RunConfig(command=Command.ROC, **fields)


def test_manifest_leaves_out_run_only_fields(tmp_path):
    config = RunConfig(command=Command.SIMULATE, out=tmp_path, jobs=4, db="sqlite://")
    assert not {"out", "jobs", "db"} & set(config.manifest_dict())
    assert config.manifest_dict()["methods"][0] == "shrink"
