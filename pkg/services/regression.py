"""Regularized regressions of one gene on all the others.

Every engine works on a centered predictor matrix ``Z`` (n × q) and a centered response
``y``. Predictors are rescaled to unit root-mean-square inside each fit and the
coefficients are mapped back, so the returned β̂ lives on the scale of the input.
"""
import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import linalg
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path

from services.dataset import ExpressionMatrix, FoldAssignment, make_folds
from services.errors import ConvergenceError, RankExceeded, RegressionError, SingularSystem
from services.methods import Method
from services.parallel import run_parallel
from services.seeding import derive_seed

logger = logging.getLogger(__name__)

GRID_SIZE = 1000
PLS_MAX_COMPONENTS = 15
CD_TOL = 1e-7
MAX_CD_SWEEPS = 100_000
MAX_BISECTIONS = 100
RANK_TOL = 1e-10
TIE_TOL = 1e-12


# ── Types ──────────────────────────────────────────────────────────────────────

class TuningGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    ridge_grid: Tuple[float, ...]
    lasso_grid: Tuple[float, ...]
    pls_range: Tuple[int, ...]

    @field_validator("ridge_grid", "lasso_grid", "pls_range")
    @classmethod
    def _strictly_increasing(cls, values):
        if not values:
            raise ValueError("grid must not be empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("grid must be strictly increasing")
        return values

    @field_validator("ridge_grid")
    @classmethod
    def _non_negative(cls, values):
        if values[0] < 0:
            raise ValueError("ridge penalties must be non-negative")
        return values

    @field_validator("lasso_grid")
    @classmethod
    def _fractions(cls, values):
        if values[0] < 0 or values[-1] > 1:
            raise ValueError("lasso fractions must lie in [0, 1]")
        return values

    @field_validator("pls_range")
    @classmethod
    def _components(cls, values):
        if values[0] < 1:
            raise ValueError("PLS needs at least one component")
        return values

    @classmethod
    def default(cls, n: int, p: int) -> "TuningGrid":
        """λ_s = l_s·n·p with l_s log-spaced in [1e-10, 1e-1]; 1000 lasso fractions; 1..15 components."""
        levels = np.logspace(-10, -1, GRID_SIZE)
        return cls(
            ridge_grid=tuple(float(level * n * p) for level in levels),
            lasso_grid=tuple(float(s) for s in np.linspace(0.0, 1.0, GRID_SIZE)),
            pls_range=tuple(range(1, PLS_MAX_COMPONENTS + 1)),
        )


@dataclass(frozen=True)
class RegressionFit:
    response_index: int
    coefficients: np.ndarray            # indexed by the remaining genes, in gene order
    method: Method
    tuning: Union[float, int]           # λ (ridge), fraction s (lasso family) or m (pls)
    cv_error: Optional[float] = None
    penalty: Optional[float] = None     # λ of the ℓ1 problem on the standardized scale

    @property
    def predictor_indices(self) -> np.ndarray:
        return np.delete(np.arange(len(self.coefficients) + 1), self.response_index)

    def full_row(self) -> np.ndarray:
        """Coefficients spread over all p genes with 0 at the response position."""
        row = np.zeros(len(self.coefficients) + 1)
        row[self.predictor_indices] = self.coefficients
        return row


@dataclass(frozen=True)
class PlsComponents:
    weights: np.ndarray     # q × m, unit norm at extraction
    scores: np.ndarray      # n × m, t_k = Z w_k, mutually orthogonal

    @property
    def count(self) -> int:
        return self.weights.shape[1]

    def coefficient_path(self, y: np.ndarray) -> np.ndarray:
        """Column m-1 holds β̂ for m components: (w_1..w_m) T'y with every t_k rescaled to length 1."""
        if self.count == 0:
            return np.zeros((self.weights.shape[0], 0))
        lengths = np.linalg.norm(self.scores, axis=0)
        weights = self.weights / lengths
        scores = self.scores / lengths
        return np.cumsum(weights * (scores.T @ y), axis=1)


# ── Shared helpers ─────────────────────────────────────────────────────────────

def _check_inputs(Z, y) -> Tuple[np.ndarray, np.ndarray]:
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise RegressionError(f"predictors {Z.shape} do not match response of length {y.shape[0]}")
    if Z.shape[1] == 0:
        raise RegressionError("no predictors")
    return Z, y


def _column_scale(Z: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.mean(Z ** 2, axis=0))
    scale[scale == 0] = 1.0
    return scale


def _scaled(Z: np.ndarray, standardize: bool) -> Tuple[np.ndarray, np.ndarray]:
    scale = _column_scale(Z) if standardize else np.ones(Z.shape[1])
    return Z / scale, scale


def _check_fraction(fraction: float) -> float:
    fraction = float(fraction)
    if not 0.0 <= fraction <= 1.0:
        raise RegressionError(f"lasso fraction must lie in [0, 1], got {fraction}")
    return fraction


def _fold_data(Z, y, folds: FoldAssignment, fold: int, standardize: bool):
    """Training part re-centered (and rescaled); the test part reuses the training statistics."""
    train, test = folds.train_test(fold)
    z_mean = Z[train].mean(axis=0)
    y_mean = y[train].mean()
    Z_train = Z[train] - z_mean
    Z_test = Z[test] - z_mean
    scale = _column_scale(Z_train) if standardize else np.ones(Z.shape[1])
    return Z_train / scale, y[train] - y_mean, Z_test / scale, y[test] - y_mean


def _path_sse(Z_test: np.ndarray, y_test: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    residuals = y_test[:, None] - Z_test @ coefs
    return np.einsum("ij,ij->j", residuals, residuals)


def _cv_curve(Z, y, folds: FoldAssignment, path: Callable, standardize: bool) -> np.ndarray:
    """Mean out-of-fold squared error for every grid point of ``path``."""
    if folds.n != len(y):
        raise RegressionError(f"fold assignment covers {folds.n} observations, data has {len(y)}")
    sse = None
    for fold in range(folds.k):
        Z_train, y_train, Z_test, y_test = _fold_data(Z, y, folds, fold, standardize)
        fold_sse = _path_sse(Z_test, y_test, path(Z_train, y_train))
        sse = fold_sse if sse is None else sse + fold_sse
    return sse / len(y)


def _select(errors: np.ndarray, prefer_last: bool) -> int:
    """Grid index with minimal CV error; ties go to the more regularized end."""
    best = errors.min()
    ties = np.flatnonzero(errors <= best + TIE_TOL * abs(best))
    return int(ties[-1] if prefer_last else ties[0])


# ── Ridge ──────────────────────────────────────────────────────────────────────

def ridge_coefficients(Z: np.ndarray, y: np.ndarray, lam: float, form: str = "auto") -> np.ndarray:
    """Minimizer of ‖y − Zβ‖² + λ‖β‖²; the dual form solves an n×n system."""
    n, q = Z.shape
    if lam < 0:
        raise RegressionError(f"ridge penalty must be non-negative, got {lam}")
    if lam == 0 and q >= n:
        raise SingularSystem(f"unpenalized fit with {q} predictors and {n} observations")
    if form == "auto":
        form = "dual" if q > n else "primal"
    try:
        if form == "dual":
            kernel = Z @ Z.T
            kernel[np.diag_indices_from(kernel)] += lam
            return Z.T @ linalg.solve(kernel, y, assume_a="pos")
        if form == "primal":
            gram = Z.T @ Z
            gram[np.diag_indices_from(gram)] += lam
            return linalg.solve(gram, Z.T @ y, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"ridge system is singular at lambda={lam:g}") from exc
    raise RegressionError(f"unknown ridge form {form!r}")


def ridge_path(Z: np.ndarray, y: np.ndarray, lambdas: Sequence[float]) -> np.ndarray:
    """Ridge solutions for every λ from one thin SVD (cost scales with min(n, q)); q × len(lambdas)."""
    lambdas = np.asarray(lambdas, dtype=float)
    U, s, Vt = linalg.svd(Z, full_matrices=False)
    keep = s > s.max(initial=0.0) * max(Z.shape) * np.finfo(float).eps
    if not keep.any():
        return np.zeros((Z.shape[1], len(lambdas)))
    s = s[keep]
    shrink = s[:, None] / (s[:, None] ** 2 + lambdas[None, :])
    return Vt[keep].T @ (shrink * (U[:, keep].T @ y)[:, None])


def fit_ridge(Z, y, lam: float, *, response_index: int = 0, standardize: bool = True,
              form: str = "auto") -> RegressionFit:
    Z, y = _check_inputs(Z, y)
    Z_scaled, scale = _scaled(Z, standardize)
    beta = ridge_coefficients(Z_scaled, y, float(lam), form) / scale
    return RegressionFit(response_index, beta, Method.RIDGE, float(lam))


# ── Lasso ──────────────────────────────────────────────────────────────────────

def lasso_kkt_violation(Z: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Largest violation of the stationarity conditions of ½‖y − Zβ‖² + λ‖β‖₁."""
    grad = Z.T @ (y - Z @ beta)
    active = beta != 0
    on_active = np.abs(grad[active] - lam * np.sign(beta[active]))
    off_active = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    return float(max(on_active.max(initial=0.0), off_active.max(initial=0.0)))


def lasso_duality_gap(Z: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    residual = y - Z @ beta
    primal = 0.5 * residual @ residual + lam * np.abs(beta).sum()
    correlation = np.abs(Z.T @ residual).max(initial=0.0)
    theta = residual * (min(1.0, lam / correlation) if correlation > 0 else 1.0)
    dual = 0.5 * y @ y - 0.5 * np.sum((y - theta) ** 2)
    return float(primal - dual)


def _coordinate_descent(Z: np.ndarray, y: np.ndarray, lam: float, beta: np.ndarray,
                        tol: float = CD_TOL, max_sweeps: int = MAX_CD_SWEEPS) -> np.ndarray:
    Z = np.asfortranarray(Z)
    beta = np.array(beta, dtype=float)
    col_sq = np.einsum("ij,ij->j", Z, Z)
    residual = y - Z @ beta
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(Z.shape[1]):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            z_j = Z[:, j]
            rho = z_j @ residual + col_sq[j] * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / col_sq[j]
            if new != old:
                residual -= (new - old) * z_j
                beta[j] = new
                max_change = max(max_change, abs(new - old))
        if max_change < tol:
            return beta
    raise ConvergenceError(
        f"coordinate descent did not converge in {max_sweeps} sweeps",
        duality_gap=lasso_duality_gap(Z, y, beta, lam),
    )


def _polish(Z: np.ndarray, y: np.ndarray, beta: np.ndarray, target: float) -> Optional[Tuple[np.ndarray, float]]:
    """Exact solution with ‖β‖₁ = target on the active set and signs of ``beta``, or None."""
    active = np.flatnonzero(beta)
    if active.size == 0:
        return None
    signs = np.sign(beta[active])
    Z_active = Z[:, active]
    try:
        factor = linalg.cho_factor(Z_active.T @ Z_active)
    except linalg.LinAlgError:
        return None
    solved_y = linalg.cho_solve(factor, Z_active.T @ y)
    solved_s = linalg.cho_solve(factor, signs)
    lam = (signs @ solved_y - target) / (signs @ solved_s)
    if not np.isfinite(lam) or lam < 0:
        return None
    coef = solved_y - lam * solved_s
    if np.any(np.sign(coef) != signs):
        return None
    polished = np.zeros_like(beta)
    polished[active] = coef
    if lasso_kkt_violation(Z, y, polished, lam) > 1e-9 * max(1.0, lam):
        return None
    return polished, float(lam)


def _lars_knots(Z: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Knots of the lasso path: penalties, coefficients (q × K) and strictly increasing ℓ1 norms."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        alphas, _, coefs = lars_path(Z, y, method="lasso", max_iter=max(500, 4 * Z.shape[1]))
    # sklearn scales penalties by 1/n
    lams = alphas * Z.shape[0]
    norms = np.maximum.accumulate(np.abs(coefs).sum(axis=0))
    keep = np.concatenate(([True], np.diff(norms) > 0))
    return lams[keep], coefs[:, keep], norms[keep]


def _interpolate(knots: np.ndarray, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Linear interpolation of the columns of ``values`` over increasing ``knots``."""
    if len(knots) == 1:
        return np.repeat(values[..., :1], len(targets), axis=-1)
    upper = np.clip(np.searchsorted(knots, targets, side="left"), 1, len(knots) - 1)
    lower = upper - 1
    weight = (targets - knots[lower]) / (knots[upper] - knots[lower])
    return values[..., lower] * (1.0 - weight) + values[..., upper] * weight


def _reference_norm(Z: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, float]:
    # minimum-norm least squares; caps the ℓ1 budget when q ≥ n
    reference = linalg.lstsq(Z, y)[0]
    return reference, float(np.abs(reference).sum())


def lasso_fraction_path(Z: np.ndarray, y: np.ndarray, fractions: Sequence[float]) -> np.ndarray:
    """Lasso solutions with ‖β‖₁ = s·‖β_ref‖₁ for every fraction s; q × len(fractions).

    The lasso is piecewise linear in its ℓ1 norm, so one LARS run gives every fraction exactly.
    """
    fractions = np.asarray(fractions, dtype=float)
    _, ref_norm = _reference_norm(Z, y)
    if ref_norm == 0.0:
        return np.zeros((Z.shape[1], len(fractions)))
    _, coefs, norms = _lars_knots(Z, y)
    targets = np.minimum(fractions * ref_norm, norms[-1])
    return _interpolate(norms, coefs, targets)


def _lasso_at_fraction(Z: np.ndarray, y: np.ndarray, fraction: float) -> Tuple[np.ndarray, float]:
    """β̂ and its λ for one fraction: LARS bracket, then bisection on λ with coordinate descent."""
    n, q = Z.shape
    lam_max = float(np.abs(Z.T @ y).max(initial=0.0))
    reference, ref_norm = _reference_norm(Z, y)
    if fraction == 0.0 or lam_max == 0.0 or ref_norm == 0.0:
        return np.zeros(q), lam_max

    lams, coefs, norms = _lars_knots(Z, y)
    target = fraction * ref_norm
    if target >= norms[-1]:
        if n > q and np.linalg.matrix_rank(Z) == q:
            return reference, 0.0
        return coefs[:, -1].copy(), float(lams[-1])

    upper = int(np.clip(np.searchsorted(norms, target, side="left"), 1, len(norms) - 1))
    lam_high, lam_low = float(lams[upper - 1]), float(lams[upper])
    weight = (target - norms[upper - 1]) / (norms[upper] - norms[upper - 1])
    lam = lam_high * (1.0 - weight) + lam_low * weight
    beta = coefs[:, upper - 1] * (1.0 - weight) + coefs[:, upper] * weight

    for _ in range(MAX_BISECTIONS):
        beta = _coordinate_descent(Z, y, lam, beta)
        polished = _polish(Z, y, beta, target)
        if polished is not None:
            return polished
        norm = np.abs(beta).sum()
        if abs(norm - target) <= 1e-10 * target:
            break
        if norm > target:
            lam_low = lam
        else:
            lam_high = lam
        lam = 0.5 * (lam_low + lam_high)
    return beta, lam


def fit_lasso(Z, y, fraction: float, *, response_index: int = 0, standardize: bool = True) -> RegressionFit:
    """ℓ1-penalized fit whose ℓ1 norm is ``fraction`` times that of the least squares reference."""
    Z, y = _check_inputs(Z, y)
    fraction = _check_fraction(fraction)
    Z_scaled, scale = _scaled(Z, standardize)
    beta, lam = _lasso_at_fraction(Z_scaled, y, fraction)
    return RegressionFit(response_index, beta / scale, Method.LASSO, fraction, penalty=lam)


def _weighted_scaling(weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Predictors kept (finite weight) and their column factors 1/w_j."""
    kept = np.flatnonzero(np.isfinite(weights))
    return kept, 1.0 / weights[kept]


def _weighted_lasso(Z: np.ndarray, y: np.ndarray, fraction: float,
                    weights: np.ndarray) -> Tuple[np.ndarray, Optional[float]]:
    # λΣ w_j|β_j| is a plain lasso on the columns Z_j / w_j
    gamma = np.zeros(Z.shape[1])
    kept, factor = _weighted_scaling(weights)
    if not kept.size:
        return gamma, None
    coef, lam = _lasso_at_fraction(Z[:, kept] * factor, y, fraction)
    gamma[kept] = coef * factor
    return gamma, lam


def _weighted_lasso_path(Z: np.ndarray, y: np.ndarray, fractions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    coefs = np.zeros((Z.shape[1], len(fractions)))
    kept, factor = _weighted_scaling(weights)
    if kept.size:
        coefs[kept] = lasso_fraction_path(Z[:, kept] * factor, y, fractions) * factor[:, None]
    return coefs


def fit_weighted_lasso(Z, y, fraction: float, weights: Sequence[float], *, response_index: int = 0,
                       standardize: bool = True) -> RegressionFit:
    """Lasso with penalty λΣ w_j|β_j|; an infinite weight removes the predictor.

    Weights refer to the standardized predictors when ``standardize`` is set.
    """
    Z, y = _check_inputs(Z, y)
    fraction = _check_fraction(fraction)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (Z.shape[1],) or np.any(np.isnan(weights)) or np.any(weights <= 0):
        raise RegressionError("weights must be positive, one per predictor")
    Z_scaled, scale = _scaled(Z, standardize)
    gamma, lam = _weighted_lasso(Z_scaled, y, fraction, weights)
    return RegressionFit(response_index, gamma / scale, Method.ADALASSO, fraction, penalty=lam)


# ── Adaptive lasso ─────────────────────────────────────────────────────────────

def adaptive_weights(stage_one: np.ndarray) -> np.ndarray:
    """w_j = 1/|β̂_j|; predictors the first stage dropped get an infinite weight."""
    stage_one = np.asarray(stage_one, dtype=float)
    weights = np.full(stage_one.shape, np.inf)
    nonzero = stage_one != 0
    weights[nonzero] = 1.0 / np.abs(stage_one[nonzero])
    return weights


def _inner_seed(seed: int, fold: int) -> int:
    return (seed + fold + 1) % 2 ** 64


def adaptive_stage_one(Z: np.ndarray, y: np.ndarray, folds: FoldAssignment, fractions: Sequence[float],
                       exact: bool = True) -> np.ndarray:
    """CV-selected lasso on (already scaled) Z; the coefficients give the adaptive weights."""
    fractions = np.asarray(fractions, dtype=float)
    errors = _cv_curve(Z, y, folds, lambda Z_train, y_train: lasso_fraction_path(Z_train, y_train, fractions),
                       standardize=True)
    fraction = float(fractions[_select(errors, prefer_last=False)])
    if exact:
        return _lasso_at_fraction(Z, y, fraction)[0]
    return lasso_fraction_path(Z, y, [fraction])[:, 0]


def _adaptive_path(Z: np.ndarray, y: np.ndarray, folds: FoldAssignment, fractions: np.ndarray) -> np.ndarray:
    weights = adaptive_weights(adaptive_stage_one(Z, y, folds, fractions, exact=False))
    return _weighted_lasso_path(Z, y, fractions, weights)


def fit_adaptive_lasso(Z, y, folds: FoldAssignment, grid: Optional[TuningGrid] = None, *,
                       response_index: int = 0, standardize: bool = True) -> RegressionFit:
    """Two-stage lasso with weights 1/|β̂_lasso|; weights are re-derived inside every outer fold."""
    Z, y = _check_inputs(Z, y)
    n, q = Z.shape
    fractions = np.asarray((grid or TuningGrid.default(n, q + 1)).lasso_grid)
    if folds.n != n:
        raise RegressionError(f"fold assignment covers {folds.n} observations, data has {n}")

    sse = np.zeros(len(fractions))
    for fold in range(folds.k):
        Z_train, y_train, Z_test, y_test = _fold_data(Z, y, folds, fold, standardize)
        inner = make_folds(len(y_train), min(folds.k, len(y_train)), _inner_seed(folds.seed, fold))
        sse += _path_sse(Z_test, y_test, _adaptive_path(Z_train, y_train, inner, fractions))
    errors = sse / n
    best = _select(errors, prefer_last=False)

    Z_scaled, _ = _scaled(Z, standardize)
    weights = adaptive_weights(adaptive_stage_one(Z_scaled, y, folds, fractions))
    fit = fit_weighted_lasso(Z, y, float(fractions[best]), weights, response_index=response_index,
                             standardize=standardize)
    return dataclasses.replace(fit, cv_error=float(errors[best]))


# ── PLS ────────────────────────────────────────────────────────────────────────

def _extract_primal(Z: np.ndarray, y: np.ndarray, m_max: int) -> Tuple[list, list]:
    q = Z.shape[1]
    cross = Z.T @ y
    cross_norm = np.linalg.norm(cross)
    basis = np.zeros((q, 0))        # orthonormal basis of the loadings Z't_l
    weights, scores = [], []
    for _ in range(m_max):
        direction = cross - basis @ (basis.T @ cross)
        length = np.linalg.norm(direction)
        if length <= RANK_TOL * cross_norm or length == 0.0:
            break
        w = direction / length
        t = Z @ w
        loading = Z.T @ (t / np.linalg.norm(t))
        for _ in range(2):
            loading -= basis @ (basis.T @ loading)
        basis = np.column_stack([basis, loading / np.linalg.norm(loading)])
        weights.append(w)
        scores.append(t)
    return weights, scores


def _extract_dual(Z: np.ndarray, y: np.ndarray, m_max: int) -> Tuple[list, list]:
    # w = Z'a for a in R^n; inner products of weights become a'Kb with K = ZZ'
    kernel = Z @ Z.T
    kernel_y = kernel @ y
    cross_norm = math.sqrt(max(y @ kernel_y, 0.0))
    loadings = np.zeros((Z.shape[0], 0))   # K-orthonormal
    duals, scores = [], []
    for _ in range(m_max):
        a = y - loadings @ (loadings.T @ kernel_y)
        length = math.sqrt(max(a @ kernel @ a, 0.0))
        if length <= RANK_TOL * cross_norm or length == 0.0:
            break
        a = a / length
        t = kernel @ a
        c = t / np.linalg.norm(t)
        for _ in range(2):
            c = c - loadings @ (loadings.T @ (kernel @ c))
        loadings = np.column_stack([loadings, c / math.sqrt(c @ kernel @ c)])
        duals.append(a)
        scores.append(t)
    return [Z.T @ a for a in duals], scores


def pls_components(Z, y, m_max: int, form: str = "auto") -> PlsComponents:
    """Up to ``m_max`` PLS components of (Z, y); fewer when the Krylov space is exhausted."""
    Z, y = _check_inputs(Z, y)
    if form == "auto":
        form = "dual" if Z.shape[1] > Z.shape[0] else "primal"
    if form == "primal":
        weights, scores = _extract_primal(Z, y, m_max)
    elif form == "dual":
        weights, scores = _extract_dual(Z, y, m_max)
    else:
        raise RegressionError(f"unknown PLS form {form!r}")
    if not weights:
        return PlsComponents(np.zeros((Z.shape[1], 0)), np.zeros((Z.shape[0], 0)))
    return PlsComponents(np.column_stack(weights), np.column_stack(scores))


def pls_path(Z, y, m_max: int, form: str = "auto") -> np.ndarray:
    """β̂ for m = 1..m_max (q × attainable count); components are nested, so one extraction suffices."""
    return pls_components(Z, y, m_max, form).coefficient_path(np.asarray(y, dtype=float).ravel())


def _padded_pls_path(Z: np.ndarray, y: np.ndarray, counts: Sequence[int]) -> np.ndarray:
    path = pls_path(Z, y, max(counts))
    if path.shape[1] == 0:
        return np.zeros((Z.shape[1], len(counts)))
    # an exhausted extraction already reproduces the least squares fit
    return path[:, [min(m, path.shape[1]) - 1 for m in counts]]


def fit_pls(Z, y, m: int, *, response_index: int = 0, standardize: bool = True, form: str = "auto") -> RegressionFit:
    Z, y = _check_inputs(Z, y)
    n, q = Z.shape
    if m < 1 or m > min(n - 1, q):
        raise RankExceeded(f"{m} components requested, at most {min(n - 1, q)} attainable")
    Z_scaled, scale = _scaled(Z, standardize)
    components = pls_components(Z_scaled, y, m, form)
    if components.count < m:
        raise RankExceeded(f"only {components.count} components attainable, {m} requested")
    beta = components.coefficient_path(y)[:, m - 1]
    return RegressionFit(response_index, beta / scale, Method.PLS, int(m))


def _pls_candidates(pls_range: Sequence[int], n: int, k: int, q: int) -> list:
    cap = min(max(pls_range), n - math.ceil(n / k) - 1, q)
    counts = [m for m in pls_range if m <= cap]
    if not counts:
        raise RankExceeded(f"no PLS component count fits {n} observations in {k} folds")
    return counts


# ── Model selection ────────────────────────────────────────────────────────────

def cv_select(Z, y, method: Method, grid: Optional[TuningGrid], folds: FoldAssignment, *,
              response_index: int = 0, standardize: bool = True) -> RegressionFit:
    """Fit at the grid point with the smallest mean out-of-fold squared error."""
    Z, y = _check_inputs(Z, y)
    method = Method(method)
    n, q = Z.shape
    grid = grid or TuningGrid.default(n, q + 1)

    if method is Method.ADALASSO:
        return fit_adaptive_lasso(Z, y, folds, grid, response_index=response_index, standardize=standardize)
    if method is Method.RIDGE:
        lambdas = np.asarray(grid.ridge_grid)
        errors = _cv_curve(Z, y, folds, lambda Z_train, y_train: ridge_path(Z_train, y_train, lambdas), standardize)
        best = _select(errors, prefer_last=True)
        fit = fit_ridge(Z, y, lambdas[best], response_index=response_index, standardize=standardize)
    elif method is Method.LASSO:
        fractions = np.asarray(grid.lasso_grid)
        errors = _cv_curve(Z, y, folds, lambda Z_train, y_train: lasso_fraction_path(Z_train, y_train, fractions),
                           standardize)
        best = _select(errors, prefer_last=False)
        fit = fit_lasso(Z, y, fractions[best], response_index=response_index, standardize=standardize)
    elif method is Method.PLS:
        counts = _pls_candidates(grid.pls_range, n, folds.k, q)
        errors = _cv_curve(Z, y, folds, lambda Z_train, y_train: _padded_pls_path(Z_train, y_train, counts),
                           standardize)
        best = _select(errors, prefer_last=False)
        Z_scaled, scale = _scaled(Z, standardize)
        beta = _padded_pls_path(Z_scaled, y, [counts[best]])[:, 0] / scale
        fit = RegressionFit(response_index, beta, Method.PLS, int(counts[best]))
    else:
        raise RegressionError(f"{method.value} is not a regression method")
    return dataclasses.replace(fit, cv_error=float(errors[best]))


def _fit_gene(values: np.ndarray, gene: int, method: Method, k: int, seed: int, grid: TuningGrid,
              standardize: bool) -> RegressionFit:
    y = values[:, gene]
    Z = np.delete(values, gene, axis=1)
    folds = make_folds(len(y), k, derive_seed(seed, gene))
    fit = cv_select(Z, y, method, grid, folds, response_index=gene, standardize=standardize)
    logger.debug("gene %d: %s tuning=%s cv_error=%.4g", gene, method.value, fit.tuning, fit.cv_error)
    return fit


def regress_all_genes(X: ExpressionMatrix, method: Method, k: int, seed: int, grid: Optional[TuningGrid] = None,
                      jobs: int = 1, standardize: bool = True) -> list:
    """One CV-selected fit per gene, each gene regressed on all the others."""
    method = Method(method)
    values = X.values
    grid = grid or TuningGrid.default(X.n, X.p)
    tasks = [(values, gene, method, k, seed, grid, standardize) for gene in range(X.p)]
    return run_parallel(_fit_gene, tasks, jobs)
