"""Simulation study: generate truth, sample, estimate, select edges and score every cell."""
import logging
from typing import List, Tuple

import pandas as pd

from commands.config import EXIT_FAILED_CELLS, EXIT_OK, RunConfig
from db.database import init_db, record_study
from services.dataset import ExpressionMatrix
from services.errors import NetworkError
from services.export import write_manifest, write_tsv
from services.fdr import edges_for_method
from services.ggm import estimate_network
from services.methods import Method
from services.metrics import summarize_report, score_recovery
from services.netgen import Cell, ScenarioGrid, TrueNetwork, sample_data, simulate_pcor_topology
from services.parallel import run_parallel
from services.seeding import derive_seed

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["scenario", "method", "n", "replication", "mse", "n_selected", "power", "tdr", "status"]
RUNTIME_COLUMNS = ["scenario", "method", "n", "replication", "runtime_ms"]


def cell_data(cell: Cell, grid: ScenarioGrid) -> Tuple[TrueNetwork, ExpressionMatrix]:
    truth = simulate_pcor_topology(grid.p, cell.topology, grid.truth_seed(cell))
    return truth, sample_data(truth, cell.n, grid.data_seed(cell))


def estimation_seed(grid: ScenarioGrid, cell: Cell) -> int:
    # shared by all methods of a cell, so they see the same folds
    return derive_seed(grid.root_seed, cell.topology.label, cell.n, cell.replication, "estimate")


def cell_key(cell: Cell, method: Method) -> dict:
    return {"scenario": cell.topology.label, "method": method.value, "n": cell.n, "replication": cell.replication}


def _score_cell(cell: Cell, grid: ScenarioGrid, config: RunConfig) -> List[dict]:
    try:
        truth, data = cell_data(cell, grid)
    except NetworkError as exc:
        logger.warning("%s n=%d rep=%d: generation failed: %s", cell.topology.label, cell.n, cell.replication, exc)
        return [dict(cell_key(cell, method), status="failed") for method in config.methods]

    rows = []
    for method in config.methods:
        row = cell_key(cell, method)
        try:
            estimate = estimate_network(data, method, config.folds_for(cell.n), estimation_seed(grid, cell),
                                        standardize=config.standardize, cap_genes=config.cap_genes)
            edges, _ = edges_for_method(estimate.pcor.upper(), method.is_sparse, config.fdr_threshold)
            row.update(score_recovery(estimate.pcor, edges, truth).model_dump(),
                       runtime_ms=1000.0 * estimate.runtime_s, status="ok")
        except NetworkError as exc:
            logger.warning("%s n=%d rep=%d %s failed: %s", cell.topology.label, cell.n, cell.replication,
                           method.value, exc)
            row["status"] = "failed"
        rows.append(row)
    logger.info("%s n=%d rep=%d done", cell.topology.label, cell.n, cell.replication)
    return rows


def run_cells(worker, grid: ScenarioGrid, config: RunConfig) -> pd.DataFrame:
    cells = list(grid.cells())
    logger.info("%d cells x %d methods on %d worker(s)", len(cells), len(config.methods), config.jobs)
    results = run_parallel(worker, [(cell, grid, config) for cell in cells], config.jobs)
    return pd.DataFrame([row for rows in results for row in rows])


def failed_count(frame: pd.DataFrame) -> int:
    return int((frame["status"] != "ok").sum()) if "status" in frame else 0


def cmd_simulate(config: RunConfig, grid: ScenarioGrid) -> int:
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    report = run_cells(_score_cell, grid, config).reindex(columns=REPORT_COLUMNS + ["runtime_ms"])
    files = [
        write_tsv(report[REPORT_COLUMNS], out / "report.tsv"),
        write_tsv(summarize_report(report), out / "summary.tsv"),
        write_tsv(report[RUNTIME_COLUMNS], out / "runtime.tsv"),
    ]
    write_manifest(out, config.command.value, config.manifest_dict(), files, grid.model_dump(mode="json"))

    if config.db:
        with init_db(config.db)() as db:
            run = record_study(db, config.command.value, config.manifest_dict(), report.to_dict("records"))
            logger.info("recorded study run %d in %s", run.id, config.db)

    failed = failed_count(report)
    if failed:
        logger.warning("%d of %d cells failed; see status column of %s", failed, len(report), files[0])
        return EXIT_FAILED_CELLS
    return EXIT_OK
