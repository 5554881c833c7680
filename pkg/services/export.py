"""Result files: dense matrices as CSV, edge lists and reports as TSV, summaries as JSON."""
import json
import logging
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from services.ggm import PartialCorrelationMatrix, upper_indices

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
NA = "NA"
REPORTED_PACKAGES = ("numpy", "scipy", "scikit-learn", "pandas", "pydantic", "joblib", "sqlalchemy")

PathLike = Union[str, Path]


def write_tsv(frame: pd.DataFrame, path: PathLike, index: bool = False) -> Path:
    path = Path(path)
    frame.to_csv(path, sep="\t", index=index, float_format=FLOAT_FORMAT, na_rep=NA, lineterminator="\n")
    return path


def write_json(payload: Any, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_pcor_csv(pcor: PartialCorrelationMatrix, labels: Sequence[str], path: PathLike) -> Path:
    path = Path(path)
    frame = pd.DataFrame(pcor.rho, index=list(labels), columns=list(labels))
    frame.to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def edge_frame(pcor: PartialCorrelationMatrix, edges: np.ndarray, labels: Sequence[str],
               local_fdr: Optional[np.ndarray] = None) -> pd.DataFrame:
    """One row per selected pair; gene indices are 1-based."""
    edges = np.asarray(edges, dtype=bool)
    i, j = upper_indices(pcor.p)
    labels = np.asarray(labels, dtype=object)
    frame = pd.DataFrame({
        "i": i[edges] + 1,
        "j": j[edges] + 1,
        "gene_i": labels[i[edges]],
        "gene_j": labels[j[edges]],
        "rho": pcor.upper()[edges],
    })
    frame["fdr"] = np.asarray(local_fdr)[edges] if local_fdr is not None else np.nan
    return frame


def write_edges_tsv(pcor: PartialCorrelationMatrix, edges: np.ndarray, labels: Sequence[str], path: PathLike,
                    local_fdr: Optional[np.ndarray] = None) -> Path:
    return write_tsv(edge_frame(pcor, edges, labels, local_fdr), path)


def package_versions() -> dict:
    versions = {}
    for name in REPORTED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_manifest(out_dir: PathLike, command: str, config: Mapping[str, Any], files: Iterable[Path],
                   grid: Optional[Mapping[str, Any]] = None) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": dict(config),
        "grid": dict(grid) if grid is not None else None,
        "seed": config.get("seed"),
        "versions": package_versions(),
        "files": sorted(Path(f).name for f in files),
    }
    path = write_json(manifest, out_dir / "manifest.json")
    logger.info("wrote %s", path)
    return path
