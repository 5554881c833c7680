"""Network estimation on a user-supplied expression CSV."""
import logging
from pathlib import Path
from typing import Dict

import numpy as np

from commands.config import EXIT_OK, RunConfig
from services.dataset import check_variance, load_csv
from services.errors import DegenerateDistribution, TooFewStatistics
from services.export import write_edges_tsv, write_json, write_manifest, write_pcor_csv, write_tsv
from services.fdr import edges_for_method
from services.ggm import NetworkEstimate, estimate_network
from services.metrics import connectivity_distribution, overlap_table, positive_edge_fraction

logger = logging.getLogger(__name__)


def _summary(estimate: NetworkEstimate, edges: np.ndarray, edge_rule: str, labels) -> dict:
    p = estimate.pcor.p
    selected = int(np.count_nonzero(edges)) if edge_rule != "none" else None
    summary = {
        "method": estimate.method.value,
        "genes": p,
        "edge_rule": edge_rule,
        "n_selected": selected,
        "percent_selected": None if selected is None else 100.0 * selected / edges.size,
        "positive_edge_fraction": positive_edge_fraction(estimate.pcor, edges) if selected else None,
        "connectivity": dict(zip(labels, connectivity_distribution(edges, p).tolist())) if selected is not None else None,
    }
    if estimate.shrinkage is not None:
        summary["shrinkage_intensity"] = estimate.shrinkage.intensity
    if estimate.fits:
        summary["tuning"] = {labels[fit.response_index]: fit.tuning for fit in estimate.fits}
    return summary


def cmd_estimate(config: RunConfig, data_csv: Path) -> int:
    X = load_csv(data_csv, has_header=config.header)
    check_variance(X)
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    labels = list(X.gene_labels)

    files = []
    selections: Dict[str, np.ndarray] = {}
    runtimes = {}
    for method in config.methods:
        estimate = estimate_network(X, method, config.folds_for(X.n), config.seed, jobs=config.jobs,
                                    standardize=config.standardize, cap_genes=config.cap_genes)
        runtimes[method.value] = estimate.runtime_s
        upper = estimate.pcor.upper()
        fdr_result = None
        try:
            edges, fdr_result = edges_for_method(upper, method.is_sparse, config.fdr_threshold)
            edge_rule = "nonzero" if method.is_sparse else f"fdr<{config.fdr_threshold:g}"
            selections[method.value] = edges
        except (TooFewStatistics, DegenerateDistribution) as exc:
            logger.warning("%s: %s; reporting partial correlations without edge selection", method.value, exc)
            edges, edge_rule = upper != 0, "none"

        files.append(write_pcor_csv(estimate.pcor, labels, out / f"{method.value}_pcor.csv"))
        files.append(write_edges_tsv(estimate.pcor, edges, labels, out / f"{method.value}_edges.tsv",
                                     fdr_result.local_fdr if fdr_result is not None else None))
        files.append(write_json(_summary(estimate, edges, edge_rule, labels), out / f"{method.value}_summary.json"))
        if fdr_result is not None:
            payload = fdr_result.model_dump(mode="json", include={"eta0", "kappa_df", "threshold", "local_fdr"})
            files.append(write_json(payload, out / f"{method.value}_fdr.json"))
        logger.info("%s: %s edges (%s)", method.value,
                    np.count_nonzero(edges) if edge_rule != "none" else "no", edge_rule)

    if len(selections) >= 2:
        files.append(write_tsv(overlap_table(selections).rename_axis("method"), out / "overlap.tsv", index=True))
    files.append(write_json(runtimes, out / "runtime.json"))
    write_manifest(out, config.command.value, dict(config.manifest_dict(), data=str(data_csv)), files)
    return EXIT_OK

