"""Subsampling stability (Fleiss' κ) per method and dataset, with the mean rank row."""
import logging
from collections import Counter
from pathlib import Path
from typing import List, Sequence

import pandas as pd

from commands.config import EXIT_OK, RunConfig
from db.database import init_db, record_stability
from services.dataset import check_variance, load_csv
from services.errors import DuplicateDataset, KappaUndefined, TooFewObservations
from services.export import write_manifest, write_tsv
from services.metrics import rank_kappas, subsample_stability

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 10
MEAN_RANK_ROW = "mean rank"


def dataset_names(data_csvs: Sequence[Path]) -> List[str]:
    """Row labels of the stability table: file names without their extension, which must be distinct."""
    names = [Path(path).stem for path in data_csvs]
    repeated = sorted(name for name, count in Counter(names).items() if count > 1)
    if repeated:
        raise DuplicateDataset(f"datasets need distinct file names, repeated: {', '.join(repeated)}")
    return names


def cmd_stability(config: RunConfig, data_csvs: Sequence[Path]) -> int:
    methods = [method.value for method in config.methods]
    kappas = pd.DataFrame(index=pd.Index([], name="dataset"), columns=methods, dtype=float)
    ranks = pd.DataFrame(columns=methods, dtype=float)
    records = []
    for path, dataset in zip(data_csvs, dataset_names(data_csvs)):
        X = load_csv(path, has_header=config.header)
        if X.n < MIN_OBSERVATIONS:
            raise TooFewObservations(f"{Path(path).name}: stability needs at least {MIN_OBSERVATIONS} observations")
        check_variance(X)
        scores = {}
        for method in config.methods:
            try:
                score = subsample_stability(
                    X, method, config.R, config.drop_fraction, config.seed, jobs=config.jobs,
                    k=None if config.k == "loo" else config.k, fdr_threshold=config.fdr_threshold,
                    standardize=config.standardize, cap_genes=config.cap_genes)
                scores[method.value] = score.kappa
            except KappaUndefined as exc:
                logger.warning("%s on %s: %s", method.value, dataset, exc)
                scores[method.value] = None
            records.append({"dataset": dataset, "method": method.value, "kappa": scores[method.value],
                            "R": config.R, "drop_fraction": config.drop_fraction})
            logger.info("%s on %s: kappa=%s", method.value, dataset, scores[method.value])
        kappas.loc[dataset] = pd.Series(scores, dtype=float)
        ranks.loc[dataset] = pd.Series(rank_kappas(scores), dtype=float)

    table = pd.concat([kappas, ranks.mean().to_frame(MEAN_RANK_ROW).T])
    table.index.name = "dataset"
    out = config.out
    out.mkdir(parents=True, exist_ok=True)
    files = [write_tsv(table, out / "stability.tsv", index=True)]
    write_manifest(out, config.command.value,
                   dict(config.manifest_dict(), data=[str(p) for p in data_csvs]), files)

    if config.db:
        with init_db(config.db)() as db:
            run = record_stability(db, config.manifest_dict(), records)
            logger.info("recorded stability run %d in %s", run.id, config.db)
    return EXIT_OK
