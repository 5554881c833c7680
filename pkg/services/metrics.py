"""Scoring of estimated networks: recovery against truth, cross-method comparison and stability."""
import logging
import math
from typing import Annotated, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, PlainSerializer

from services.dataset import ExpressionMatrix
from services.errors import DimensionError, KappaUndefined, MetricsError, NetworkError, SubsampleError
from services.fdr import DEFAULT_THRESHOLD, edges_for_method
from services.ggm import PartialCorrelationMatrix, estimate_network, upper_indices
from services.methods import Method
from services.netgen import TrueNetwork
from services.parallel import run_parallel
from services.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

MIN_SUBSAMPLE = 5

IntArray = Annotated[np.ndarray, PlainSerializer(lambda a: np.asarray(a).tolist(), return_type=list, when_used="json")]

# selector(data, seed) -> boolean mask over the upper triangle
EdgeSelector = Callable[[ExpressionMatrix, int], np.ndarray]


# ── Edge sets ──────────────────────────────────────────────────────────────────

def edge_pairs(mask: np.ndarray, p: int) -> List[Tuple[int, int]]:
    i, j = upper_indices(p)
    mask = np.asarray(mask, dtype=bool)
    return list(zip(i[mask].tolist(), j[mask].tolist()))


def edge_mask(pairs: Iterable[Tuple[int, int]], p: int) -> np.ndarray:
    adjacency = np.zeros((p, p), dtype=bool)
    for a, b in pairs:
        if a == b:
            raise DimensionError(f"self-loop at gene {a}")
        adjacency[a, b] = adjacency[b, a] = True
    return adjacency[upper_indices(p)]


# ── Recovery ───────────────────────────────────────────────────────────────────

class RecoveryScore(BaseModel):
    mse: float
    n_selected: int
    power: Optional[float]
    tdr: Optional[float]


def score_recovery(estimated: PartialCorrelationMatrix, selected: np.ndarray, truth: TrueNetwork) -> RecoveryScore:
    selected = np.asarray(selected, dtype=bool)
    if estimated.p != truth.p:
        raise DimensionError(f"estimate over {estimated.p} genes, truth over {truth.p}")
    true_edges = truth.edges
    if selected.shape != true_edges.shape:
        raise DimensionError(f"selection over {selected.size} pairs, expected {true_edges.size}")
    mse = float(np.mean((estimated.upper() - truth.pcor.upper()) ** 2))
    hits = int(np.count_nonzero(selected & true_edges))
    n_selected = int(np.count_nonzero(selected))
    n_true = int(np.count_nonzero(true_edges))
    return RecoveryScore(
        mse=mse,
        n_selected=n_selected,
        power=hits / n_true if n_true else None,
        tdr=hits / n_selected if n_selected else None,
    )


# ── Stability ──────────────────────────────────────────────────────────────────

class StabilityScore(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kappa: float
    R: int
    per_edge_counts: IntArray


def fleiss_kappa(counts: Sequence[int], R: int) -> StabilityScore:
    """Agreement of R binary selections per edge; ``counts[i]`` is how often edge i was selected."""
    counts = np.asarray(counts, dtype=int)
    if R < 2:
        raise MetricsError(f"need at least 2 subsamples, got {R}")
    if counts.size == 0 or np.any(counts < 0) or np.any(counts > R):
        raise MetricsError(f"selection counts must lie in [0, {R}]")
    selected_share = counts.sum() / (R * counts.size)
    if selected_share in (0.0, 1.0):
        raise KappaUndefined("every subsample selected all edges or none")
    per_edge = (counts ** 2 + (R - counts) ** 2 - R) / (R * (R - 1))
    chance = selected_share ** 2 + (1.0 - selected_share) ** 2
    kappa = (per_edge.mean() - chance) / (1.0 - chance)
    return StabilityScore(kappa=float(kappa), R=R, per_edge_counts=counts)


def method_selector(method: Method, k: int = 5, fdr_threshold: float = DEFAULT_THRESHOLD, **options) -> EdgeSelector:
    """Full estimation plus the edge rule for ``method``, as a subsample selector."""
    method = Method(method)

    def select(data: ExpressionMatrix, seed: int) -> np.ndarray:
        fold_count = data.n if k is None else min(k, data.n)
        pcor = estimate_network(data, method, fold_count, seed, **options).pcor
        return edges_for_method(pcor.upper(), method.is_sparse, fdr_threshold)[0]

    return select


def _subsample_task(X: ExpressionMatrix, rows: np.ndarray, index: int, selector: EdgeSelector, seed: int):
    try:
        return np.asarray(selector(X.take_rows(rows), seed), dtype=bool)
    except NetworkError as exc:
        raise SubsampleError(index, exc) from exc


def subsample_stability(X: ExpressionMatrix, method: Union[Method, EdgeSelector], R: int = 10,
                        drop_fraction: float = 0.1, seed: int = 0, *, jobs: int = 1, **options) -> StabilityScore:
    """Selection agreement over R subsamples, each leaving out round(drop_fraction·n) observations."""
    if R < 2:
        raise MetricsError(f"need at least 2 subsamples, got {R}")
    if not 0.0 < drop_fraction < 0.5:
        raise MetricsError(f"drop fraction must lie in (0, 0.5), got {drop_fraction}")
    dropped = int(math.floor(drop_fraction * X.n + 0.5))
    kept = X.n - dropped
    if kept < MIN_SUBSAMPLE:
        raise MetricsError(f"subsamples of {kept} observations are too small")
    selector = method if callable(method) and not isinstance(method, Method) else method_selector(method, **options)

    tasks = []
    for index in range(R):
        rows = np.sort(make_rng(derive_seed(seed, "subsample", index)).choice(X.n, size=kept, replace=False))
        tasks.append((X, rows, index, selector, derive_seed(seed, "estimate", index)))
    masks = run_parallel(_subsample_task, tasks, jobs)
    counts = np.sum(masks, axis=0)
    score = fleiss_kappa(counts, R)
    logger.info("stability over %d subsamples of %d/%d observations: kappa=%.4f", R, kept, X.n, score.kappa)
    return score


def rank_kappas(kappas: Mapping[str, Optional[float]]) -> Dict[str, Optional[float]]:
    """1 = most stable; ties share the mean rank; undefined κ gets no rank."""
    ranks = pd.Series(kappas, dtype=float).rank(ascending=False, method="average")
    return {name: (None if pd.isna(rank) else float(rank)) for name, rank in ranks.items()}


# ── Cross-method comparison ────────────────────────────────────────────────────

SELECTED_ROW = "% selected"


def overlap_table(networks: Mapping[str, np.ndarray]) -> pd.DataFrame:
    """Entry (A, B) = share of A's edges also found by B, plus a ``% selected`` row."""
    if len(networks) < 2:
        raise MetricsError("overlap needs at least two networks")
    masks = {name: np.asarray(mask, dtype=bool) for name, mask in networks.items()}
    sizes = {mask.size for mask in masks.values()}
    if len(sizes) != 1:
        raise DimensionError("networks cover different gene pairs")
    names = list(masks)
    table = pd.DataFrame(np.nan, index=names + [SELECTED_ROW], columns=names)
    for a in names:
        found = np.count_nonzero(masks[a])
        for b in names:
            if found:
                table.loc[a, b] = np.count_nonzero(masks[a] & masks[b]) / found
        table.loc[SELECTED_ROW, a] = 100.0 * found / masks[a].size
    return table


def connectivity_distribution(edges: np.ndarray, p: int) -> np.ndarray:
    """Per gene, the share of the other genes connected to it."""
    edges = np.asarray(edges, dtype=bool)
    i, j = upper_indices(p)
    if edges.shape != i.shape:
        raise DimensionError(f"edge mask over {edges.size} pairs, expected {i.size}")
    degree = np.bincount(i[edges], minlength=p) + np.bincount(j[edges], minlength=p)
    return degree / (p - 1)


def positive_edge_fraction(pcor: PartialCorrelationMatrix, edges: np.ndarray) -> Optional[float]:
    edges = np.asarray(edges, dtype=bool)
    if not edges.any():
        return None
    return float(np.mean(pcor.upper()[edges] > 0))


# ── Reports ────────────────────────────────────────────────────────────────────

SCORE_COLUMNS = ["mse", "n_selected", "power", "tdr"]


def summarize_report(rows: Union[pd.DataFrame, Iterable[Mapping]]) -> pd.DataFrame:
    """Mean and standard deviation over replications per (scenario, method, n); failed cells are left out."""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    if "status" in frame:
        frame = frame[frame["status"] == "ok"]
    keys = ["scenario", "method", "n"]
    if frame.empty:
        return pd.DataFrame(columns=keys + ["replications"] + [f"{c}_{s}" for c in SCORE_COLUMNS for s in ("mean", "sd")])
    scores = frame[keys + SCORE_COLUMNS].astype({c: float for c in SCORE_COLUMNS})
    grouped = scores.groupby(keys, sort=False)
    summary = grouped[SCORE_COLUMNS].agg(["mean", "std"])
    summary.columns = [f"{column}_{'sd' if stat == 'std' else stat}" for column, stat in summary.columns]
    summary.insert(0, "replications", grouped.size())
    return summary.reset_index()
