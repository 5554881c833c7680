"""Local fdr edge testing with an empirical null for sample partial correlations."""
import logging
from typing import Annotated, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PlainSerializer
from scipy import special, stats
from scipy.optimize import minimize_scalar
from sklearn.isotonic import IsotonicRegression
from sklearn.metrics import auc

from services.errors import DegenerateDistribution, FdrError, InvalidThreshold, RocUndefined, TooFewStatistics

logger = logging.getLogger(__name__)

MIN_STATISTICS = 100
DEFAULT_THRESHOLD = 0.2
CENTRAL_QUANTILE = 0.75
MIN_CENTRAL = 10
# search range for log(kappa - 3)
LOG_KAPPA_BOUNDS = (-6.0, 12.0)

FloatArray = Annotated[np.ndarray, PlainSerializer(lambda a: np.asarray(a).tolist(), return_type=list, when_used="json")]


def null_density(r, kappa: float) -> np.ndarray:
    """Density of a sample correlation under independence, (1 − r²)^((κ−3)/2) / B(½, (κ−1)/2)."""
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) < 1
    base = np.where(inside, 1.0 - r ** 2, 1.0)
    log_density = 0.5 * (kappa - 3.0) * np.log(base) - special.betaln(0.5, 0.5 * (kappa - 1.0))
    return np.where(inside, np.exp(log_density), 0.0)


def null_central_mass(cut: float, kappa: float) -> float:
    """P(|r| ≤ cut) under the null; r² follows Beta(½, (κ−1)/2)."""
    return float(special.betainc(0.5, 0.5 * (kappa - 1.0), cut ** 2))


def null_quantile(q: float, kappa: float) -> float:
    """|r| below which the null puts mass q."""
    return float(np.sqrt(special.betaincinv(0.5, 0.5 * (kappa - 1.0), q)))


class FdrResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    statistics: FloatArray
    eta0: float
    kappa_df: float
    local_fdr: FloatArray
    threshold: float = DEFAULT_THRESHOLD
    central_cut: float
    # fitted non-increasing fdr curve over |r|
    curve_abs: FloatArray
    curve_fdr: FloatArray

    def evaluate(self, r) -> np.ndarray:
        return np.interp(np.abs(np.asarray(r, dtype=float)), self.curve_abs, self.curve_fdr)


def _truncated_loglik(log_excess: float, central: np.ndarray, cut: float) -> float:
    kappa = 3.0 + np.exp(log_excess)
    a = 0.5 * (kappa - 1.0)
    mass = special.betainc(0.5, a, cut ** 2)
    if mass <= 0:
        return -np.inf
    log_terms = 0.5 * (kappa - 3.0) * np.log1p(-central ** 2)
    return float(log_terms.sum() - central.size * (special.betaln(0.5, a) + np.log(mass)))


def _fit_kappa(abs_r: np.ndarray, cut: float) -> float:
    central = np.minimum(abs_r[abs_r <= cut], 1.0 - 1e-12)
    result = minimize_scalar(lambda t: -_truncated_loglik(t, central, cut),
                             bounds=LOG_KAPPA_BOUNDS, method="bounded")
    return 3.0 + float(np.exp(result.x))


def fit_empirical_null(statistics: Sequence[float], threshold: float = DEFAULT_THRESHOLD) -> FdrResult:
    """Two-group fit: null (1 − r²)^((κ−3)/2) scaled by η₀ against a kernel density of all statistics."""
    statistics = np.asarray(statistics, dtype=float).ravel()
    if statistics.size < MIN_STATISTICS:
        raise TooFewStatistics(f"need at least {MIN_STATISTICS} statistics, got {statistics.size}")
    if not np.all(np.isfinite(statistics)) or np.any(np.abs(statistics) > 1):
        raise FdrError("statistics must be finite partial correlations in [-1, 1]")
    if np.ptp(statistics) == 0:
        raise DegenerateDistribution(f"all {statistics.size} statistics equal {statistics[0]:g}")
    _check_threshold(threshold)

    abs_r = np.abs(statistics)
    cut = float(np.quantile(abs_r, CENTRAL_QUANTILE))
    if cut <= 0:
        raise DegenerateDistribution("more than three quarters of the statistics are zero")
    kappa = _fit_kappa(abs_r, cut)
    refined = null_quantile(CENTRAL_QUANTILE, kappa)
    if np.count_nonzero(abs_r <= refined) >= MIN_CENTRAL:
        cut = refined
        kappa = _fit_kappa(abs_r, cut)
    eta0 = float(np.clip(np.mean(abs_r <= cut) / null_central_mass(cut, kappa), 0.0, 1.0))

    # mirrored sample: the fitted density is symmetric in r
    density = stats.gaussian_kde(np.concatenate([statistics, -statistics]), bw_method="scott")
    mixture = density(statistics)
    raw = np.clip(eta0 * null_density(statistics, kappa) / np.maximum(mixture, np.finfo(float).tiny), 0.0, 1.0)
    raw[abs_r <= cut] = 1.0

    isotonic = IsotonicRegression(increasing=False, y_min=0.0, y_max=1.0, out_of_bounds="clip")
    local_fdr = isotonic.fit_transform(abs_r, raw)
    logger.debug("empirical null: eta0=%.4f kappa=%.2f cut=%.4f", eta0, kappa, cut)
    return FdrResult(
        statistics=statistics,
        eta0=eta0,
        kappa_df=kappa,
        local_fdr=np.asarray(local_fdr, dtype=float),
        threshold=threshold,
        central_cut=cut,
        curve_abs=np.asarray(isotonic.X_thresholds_, dtype=float),
        curve_fdr=np.asarray(isotonic.y_thresholds_, dtype=float),
    )


def _check_threshold(threshold: float) -> float:
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise InvalidThreshold(f"fdr threshold must lie in [0, 1], got {threshold}")
    return threshold


def select_edges(result: FdrResult, threshold: Optional[float] = None) -> np.ndarray:
    """Mask of statistics with local fdr strictly below the threshold."""
    threshold = _check_threshold(result.threshold if threshold is None else threshold)
    return result.local_fdr < threshold


# ── ROC ────────────────────────────────────────────────────────────────────────

def sensitivity_specificity(selected: np.ndarray, truth: np.ndarray) -> Tuple[float, float]:
    selected = np.asarray(selected, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if selected.shape != truth.shape:
        raise FdrError(f"selection over {selected.size} pairs, truth over {truth.size}")
    positives = np.count_nonzero(truth)
    if positives == 0:
        raise RocUndefined("sensitivity is undefined without true edges")
    negatives = truth.size - positives
    sensitivity = np.count_nonzero(selected & truth) / positives
    # a complete truth graph has no negatives to misclassify
    specificity = 1.0 if negatives == 0 else np.count_nonzero(~selected & ~truth) / negatives
    return float(sensitivity), float(specificity)


def roc_sweep(result: FdrResult, truth: np.ndarray, thresholds: Iterable[float]) -> List[Tuple[float, float]]:
    return [sensitivity_specificity(select_edges(result, t), truth) for t in thresholds]


def roc_auc(points: Iterable[Tuple[float, float]]) -> float:
    """Trapezoidal area under (1 − specificity, sensitivity), anchored at (0, 0) and (1, 1)."""
    curve = sorted({(0.0, 0.0), (1.0, 1.0)} | {(1.0 - spec, sens) for sens, spec in points})
    fpr, tpr = zip(*curve)
    return float(auc(np.asarray(fpr), np.asarray(tpr)))


def edges_for_method(pcor_upper: np.ndarray, sparse: bool, threshold: float = DEFAULT_THRESHOLD
                     ) -> Tuple[np.ndarray, Optional[FdrResult]]:
    """Edge rule per estimator: nonzero estimates for sparse methods, local fdr below ``threshold`` otherwise."""
    pcor_upper = np.asarray(pcor_upper, dtype=float)
    if sparse:
        return pcor_upper != 0, None
    result = fit_empirical_null(pcor_upper, threshold)
    return select_edges(result), result
