"""Expression matrices: CSV ingestion, centering/standardization and CV folds."""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from services.errors import (
    InvalidFolds,
    ParseError,
    TooFewGenes,
    TooFewObservations,
    ZeroVarianceError,
)
from services.seeding import make_rng

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 3
MIN_GENES = 2


def default_labels(p: int) -> Tuple[str, ...]:
    return tuple(f"g{j + 1}" for j in range(p))


@dataclass(frozen=True)
class ExpressionMatrix:
    """n×p matrix, rows = arrays/observations, columns = genes. Read-only after construction."""

    values: np.ndarray
    gene_labels: Tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ParseError(f"expression data must be a matrix, got {values.ndim} dimension(s)")
        if not np.all(np.isfinite(values)):
            rows, cols = np.nonzero(~np.isfinite(values))
            raise ParseError("missing or non-finite value", row=int(rows[0]) + 1, column=int(cols[0]) + 1)
        n, p = values.shape
        if n < MIN_OBSERVATIONS:
            raise TooFewObservations(f"need at least {MIN_OBSERVATIONS} observations, got {n}")
        if p < MIN_GENES:
            raise TooFewGenes(f"need at least {MIN_GENES} genes, got {p}")
        labels = tuple(str(label) for label in self.gene_labels)
        if len(labels) != p:
            raise ParseError(f"{len(labels)} gene labels for {p} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "gene_labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "ExpressionMatrix":
        return ExpressionMatrix(values=values, gene_labels=self.gene_labels)

    def take_rows(self, rows: Sequence[int]) -> "ExpressionMatrix":
        return self.with_values(self.values[np.asarray(rows, dtype=int)])


# ── CSV in/out ─────────────────────────────────────────────────────────────────

def _line_of(error: Exception) -> Optional[int]:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def load_csv(path: Union[str, Path], has_header: bool = False) -> ExpressionMatrix:
    """Read a comma-separated matrix (rows = observations). The result is NOT centered."""
    path = Path(path)
    try:
        # blank lines kept as empty rows so the index maps back to file lines
        frame = pd.read_csv(path, header=0 if has_header else None, dtype=str, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise TooFewObservations(f"{path.name}: no data") from None
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path.name}: rows of unequal length", row=_line_of(exc)) from None
    frame.index = frame.index + (2 if has_header else 1)
    cells = frame.dropna(how="all").map(str.strip, na_action="ignore")

    missing = cells.isna().to_numpy()
    if missing.any():
        row, col = np.argwhere(missing)[0]
        line = int(cells.index[row])
        if missing[row, col:].all():
            raise ParseError(f"expected {cells.shape[1]} fields, found {col}", row=line)
        raise ParseError("missing value", row=line, column=int(col) + 1)
    if len(cells) < MIN_OBSERVATIONS:
        raise TooFewObservations(f"{path.name}: need at least {MIN_OBSERVATIONS} observations, got {len(cells)}")

    values = cells.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ParseError(f"non-numeric cell {cells.iat[row, col]!r}", row=int(cells.index[row]), column=int(col) + 1)

    labels = tuple(str(label).strip() for label in cells.columns) if has_header else default_labels(values.shape[1])
    logger.info("loaded %s: %d observations x %d genes", path.name, values.shape[0], values.shape[1])
    return ExpressionMatrix(values=values, gene_labels=labels)


def write_csv(X: ExpressionMatrix, path: Union[str, Path]) -> Path:
    path = Path(path)
    # pandas prints floats with repr precision, so load_csv reads back the same values
    pd.DataFrame(X.values, columns=list(X.gene_labels)).to_csv(path, index=False)
    return path


# ── Preparation ────────────────────────────────────────────────────────────────

def center_columns(X: ExpressionMatrix) -> ExpressionMatrix:
    values = X.values - X.values.mean(axis=0)
    return X.with_values(values)


def check_variance(X: ExpressionMatrix) -> None:
    """Partial correlations involving a constant gene are undefined."""
    constant = np.all(X.values == X.values[0], axis=0)
    if constant.any():
        raise ZeroVarianceError([X.gene_labels[j] for j in np.flatnonzero(constant)])


def standardize_columns(X: ExpressionMatrix) -> ExpressionMatrix:
    check_variance(X)
    centered = X.values - X.values.mean(axis=0)
    return X.with_values(centered / centered.std(axis=0, ddof=1))


def prepare(X: ExpressionMatrix, standardize: bool = True) -> ExpressionMatrix:
    return standardize_columns(X) if standardize else center_columns(X)


# ── Cross-validation folds ─────────────────────────────────────────────────────

class FoldAssignment(BaseModel):
    model_config = ConfigDict(frozen=True)

    fold_of: Tuple[int, ...]
    k: int
    seed: int

    @property
    def n(self) -> int:
        return len(self.fold_of)

    def fold_sizes(self) -> list[int]:
        return np.bincount(np.asarray(self.fold_of), minlength=self.k).tolist()

    def train_test(self, fold: int) -> Tuple[np.ndarray, np.ndarray]:
        fold_of = np.asarray(self.fold_of)
        return np.flatnonzero(fold_of != fold), np.flatnonzero(fold_of == fold)


def make_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Balanced random partition of n observations into k folds; k = n gives leave-one-out."""
    if k < 2:
        raise InvalidFolds(f"need at least 2 folds, got {k}")
    if k > n:
        raise InvalidFolds(f"{k} folds requested for {n} observations")
    perm = make_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(fold_of=tuple(int(f) for f in fold_of), k=k, seed=seed)
