"""Partial-correlation matrices from regressions or from the shrinkage covariance estimator."""
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from services.dataset import ExpressionMatrix, check_variance, prepare
from services.errors import EstimationError, GeneCapExceeded, IncompleteFits, InvalidPrecision, SingularCovariance
from services.methods import Method
from services.regression import RegressionFit, TuningGrid, regress_all_genes

logger = logging.getLogger(__name__)

DEFAULT_GENE_CAP = 2000
PCOR_TOLERANCE = 1e-12


def upper_indices(p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major positions of the p(p-1)/2 unordered gene pairs; edge sets are masks in this order."""
    return np.triu_indices(p, k=1)


@dataclass(frozen=True)
class PartialCorrelationMatrix:
    rho: np.ndarray
    method: Optional[Method] = None

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise EstimationError(f"partial correlations must be a square matrix, got shape {rho.shape}")
        if not np.all(np.isfinite(rho)):
            raise EstimationError("partial correlations must be finite")
        if not np.allclose(rho, rho.T, rtol=0.0, atol=PCOR_TOLERANCE):
            raise EstimationError("partial correlations must be symmetric")
        if not np.allclose(np.diag(rho), 1.0, rtol=0.0, atol=PCOR_TOLERANCE):
            raise EstimationError("partial correlations must have a unit diagonal")
        if np.any(np.abs(rho) > 1.0 + PCOR_TOLERANCE):
            raise EstimationError(f"partial correlations must lie in [-1, 1], found {np.abs(rho).max():.6g}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def p(self) -> int:
        return self.rho.shape[0]

    def upper(self) -> np.ndarray:
        return self.rho[upper_indices(self.p)]

    def nonzero_mask(self) -> np.ndarray:
        return self.upper() != 0


def _from_upper(values: np.ndarray, p: int, method: Optional[Method]) -> PartialCorrelationMatrix:
    rho = np.eye(p)
    i, j = upper_indices(p)
    rho[i, j] = values
    rho[j, i] = values
    return PartialCorrelationMatrix(rho, method)


# ── Regression route ───────────────────────────────────────────────────────────

def pcor_from_coefficients(coefficients: np.ndarray, method: Optional[Method] = None) -> PartialCorrelationMatrix:
    """``coefficients[i, j]`` is β̂_j of the regression of gene i; the diagonal is ignored.

    ρ̂_ij = sign(β̂^(i)_j)·min(1, sqrt(β̂^(i)_j β̂^(j)_i)) when both signs agree, else 0.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    p = coefficients.shape[0]
    i, j = upper_indices(p)
    forward, backward = coefficients[i, j], coefficients[j, i]
    product = forward * backward
    agree = product > 0
    magnitude = np.minimum(1.0, np.sqrt(np.where(agree, product, 0.0)))
    return _from_upper(np.where(agree, np.sign(forward) * magnitude, 0.0), p, method)


def pcor_from_regressions(fits: Iterable[RegressionFit]) -> PartialCorrelationMatrix:
    fits = list(fits)
    if not fits:
        raise IncompleteFits("no regression fits given")
    p = len(fits[0].coefficients) + 1
    by_gene = {}
    for fit in fits:
        if len(fit.coefficients) != p - 1:
            raise IncompleteFits(f"fit for gene {fit.response_index} has {len(fit.coefficients)} coefficients, "
                                 f"expected {p - 1}")
        by_gene[fit.response_index] = fit
    missing = sorted(set(range(p)) - by_gene.keys())
    if missing:
        raise IncompleteFits(f"no regression fit for gene(s) {missing}")
    coefficients = np.vstack([by_gene[gene].full_row() for gene in range(p)])
    return pcor_from_coefficients(coefficients, fits[0].method)


# ── Covariance route ───────────────────────────────────────────────────────────

def pcor_from_precision(omega: np.ndarray, method: Optional[Method] = None) -> PartialCorrelationMatrix:
    """ρ̂_ij = −ω_ij / sqrt(ω_ii ω_jj), unit diagonal."""
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise InvalidPrecision(f"precision must be a square matrix, got shape {omega.shape}")
    omega = 0.5 * (omega + omega.T)
    diagonal = np.diag(omega)
    if np.any(diagonal <= 0):
        raise InvalidPrecision(f"non-positive diagonal entry at gene(s) {np.flatnonzero(diagonal <= 0).tolist()}")
    scale = np.sqrt(diagonal)
    rho = np.clip(-omega / np.outer(scale, scale), -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return PartialCorrelationMatrix(rho, method)


@dataclass(frozen=True)
class ShrinkageEstimate:
    sigma: np.ndarray
    intensity: float
    target: str = "identity-correlation"

    def precision(self) -> np.ndarray:
        try:
            factor = linalg.cho_factor(self.sigma)
        except linalg.LinAlgError as exc:
            raise SingularCovariance(
                f"shrunk covariance is not positive definite (intensity {self.intensity:.4g})") from exc
        return linalg.cho_solve(factor, np.eye(self.sigma.shape[0]))


def _standardized(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    centered = values - values.mean(axis=0)
    sd = centered.std(axis=0, ddof=1)
    return centered / sd, sd


def shrinkage_intensity(X: ExpressionMatrix) -> float:
    """Analytic λ* = Σ Var̂(r_ij) / Σ r_ij² over i ≠ j, clamped to [0, 1]."""
    check_variance(X)
    standardized, _ = _standardized(X.values)
    n = standardized.shape[0]
    mean_products = standardized.T @ standardized / n
    r = mean_products * n / (n - 1)
    squares = standardized ** 2
    variance = n / (n - 1) ** 3 * (squares.T @ squares - n * mean_products ** 2)
    off = ~np.eye(X.p, dtype=bool)
    denominator = np.sum(r[off] ** 2)
    if denominator == 0.0:
        return 1.0
    return float(np.clip(np.sum(variance[off]) / denominator, 0.0, 1.0))


def shrinkage_covariance(X: ExpressionMatrix, intensity: Optional[float] = None) -> ShrinkageEstimate:
    """Correlations shrunk toward the identity; variances are left intact."""
    check_variance(X)
    if intensity is None:
        intensity = shrinkage_intensity(X)
    elif not 0.0 <= intensity <= 1.0:
        raise EstimationError(f"shrinkage intensity must lie in [0, 1], got {intensity}")
    standardized, sd = _standardized(X.values)
    correlation = standardized.T @ standardized / (X.n - 1)
    shrunk = (1.0 - intensity) * correlation
    np.fill_diagonal(shrunk, 1.0)
    sigma = shrunk * np.outer(sd, sd)
    return ShrinkageEstimate(sigma=0.5 * (sigma + sigma.T), intensity=float(intensity))


# ── Orchestration ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class NetworkEstimate:
    pcor: PartialCorrelationMatrix
    method: Method
    fits: List[RegressionFit] = field(default_factory=list)
    shrinkage: Optional[ShrinkageEstimate] = None
    runtime_s: float = 0.0


def estimate_network(X: ExpressionMatrix, method: Method, k: int = 5, seed: int = 0, *,
                     grid: Optional[TuningGrid] = None, jobs: int = 1, standardize: bool = True,
                     cap_genes: int = DEFAULT_GENE_CAP) -> NetworkEstimate:
    method = Method(method)
    check_variance(X)
    if method.is_sparse and cap_genes and X.p > cap_genes:
        raise GeneCapExceeded(f"{method.value} on {X.p} genes exceeds the cap of {cap_genes}; "
                              f"raise --cap-genes (0 disables) to run it anyway")
    started = time.perf_counter()
    data = prepare(X, standardize)
    if method is Method.SHRINK:
        shrinkage = shrinkage_covariance(data)
        logger.info("shrinkage intensity %.4f (n=%d, p=%d)", shrinkage.intensity, X.n, X.p)
        pcor = pcor_from_precision(shrinkage.precision(), method)
        estimate = NetworkEstimate(pcor, method, shrinkage=shrinkage)
    else:
        fits = regress_all_genes(data, method, k, seed, grid, jobs)
        estimate = NetworkEstimate(pcor_from_regressions(fits), method, fits=fits)
    runtime = time.perf_counter() - started
    logger.debug("%s finished in %.2fs", method.value, runtime)
    return NetworkEstimate(estimate.pcor, method, estimate.fits, estimate.shrinkage, runtime)


def estimate_network_matrix(X: ExpressionMatrix, method: Method, k: int = 5, seed: int = 0,
                            **options) -> PartialCorrelationMatrix:
    return estimate_network(X, method, k, seed, **options).pcor
