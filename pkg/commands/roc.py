"""ROC curves over the fdr threshold for the tested methods; single points for the sparse ones."""
import logging
from typing import List

import numpy as np
import pandas as pd

from commands.config import EXIT_FAILED_CELLS, EXIT_OK, RunConfig
from commands.simulate import cell_data, cell_key, estimation_seed, failed_count, run_cells
from services.errors import NetworkError
from services.export import FLOAT_FORMAT, NA, write_manifest
from services.fdr import fit_empirical_null, roc_sweep, sensitivity_specificity
from services.ggm import estimate_network
from services.netgen import Cell, ScenarioGrid

logger = logging.getLogger(__name__)

ROC_COLUMNS = ["scenario", "n", "threshold", "sensitivity", "specificity"]


def _roc_cell(cell: Cell, grid: ScenarioGrid, config: RunConfig) -> List[dict]:
    try:
        truth, data = cell_data(cell, grid)
    except NetworkError as exc:
        logger.warning("%s n=%d rep=%d: generation failed: %s", cell.topology.label, cell.n, cell.replication, exc)
        return [dict(cell_key(cell, method), status="failed") for method in config.methods]

    rows = []
    for method in config.methods:
        key = cell_key(cell, method)
        try:
            estimate = estimate_network(data, method, config.folds_for(cell.n), estimation_seed(grid, cell),
                                        standardize=config.standardize, cap_genes=config.cap_genes)
            upper = estimate.pcor.upper()
            if method.is_sparse:
                sensitivity, specificity = sensitivity_specificity(upper != 0, truth.edges)
                rows.append(dict(key, threshold=np.nan, sensitivity=sensitivity, specificity=specificity,
                                 status="ok"))
                continue
            points = roc_sweep(fit_empirical_null(upper, config.fdr_threshold), truth.edges, config.thresholds)
            rows.extend(dict(key, threshold=t, sensitivity=sens, specificity=spec, status="ok")
                        for t, (sens, spec) in zip(config.thresholds, points))
        except NetworkError as exc:
            logger.warning("%s n=%d rep=%d %s failed: %s", cell.topology.label, cell.n, cell.replication,
                           method.value, exc)
            rows.append(dict(key, status="failed"))
    return rows


def average_curves(points: pd.DataFrame) -> pd.DataFrame:
    """Mean (sensitivity, specificity) over replications per method, scenario, n and threshold."""
    ok = points[points["status"] == "ok"]
    return (ok.groupby(["method", "scenario", "n", "threshold"], sort=False, dropna=False)
              [["sensitivity", "specificity"]].mean().reset_index())


def cmd_roc(config: RunConfig, grid: ScenarioGrid) -> int:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    points = run_cells(_roc_cell, grid, config).reindex(
        columns=["scenario", "method", "n", "replication", "threshold", "sensitivity", "specificity", "status"])
    curves = average_curves(points)

    files = []
    for method in config.methods:
        path = out / f"roc_{method.value}.csv"
        curves[curves["method"] == method.value][ROC_COLUMNS].to_csv(
            path, index=False, float_format=FLOAT_FORMAT, na_rep=NA, lineterminator="\n")
        files.append(path)
    write_manifest(out, config.command.value, config.manifest_dict(), files, grid.model_dump(mode="json"))

    failed = failed_count(points)
    if failed:
        logger.warning("%d ROC cells failed", failed)
        return EXIT_FAILED_CELLS
    return EXIT_OK
