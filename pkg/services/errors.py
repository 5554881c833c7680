"""Exception hierarchy shared by every service and command."""
from typing import Optional, Sequence


class NetworkError(Exception):
    """Base class for every failure raised by the estimation pipeline."""


# ── dataset ────────────────────────────────────────────────────────────────────

class DatasetError(NetworkError):
    pass


class ParseError(DatasetError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class DuplicateDataset(DatasetError):
    pass


class TooFewObservations(DatasetError):
    pass


class TooFewGenes(DatasetError):
    pass


class InvalidFolds(DatasetError):
    pass


class ZeroVarianceError(DatasetError):
    def __init__(self, genes: Sequence[str]):
        super().__init__(f"zero-variance genes: {', '.join(genes)}")
        self.genes = list(genes)


# ── regression ─────────────────────────────────────────────────────────────────

class RegressionError(NetworkError):
    pass


class SingularSystem(RegressionError):
    pass


class ConvergenceError(RegressionError):
    def __init__(self, message: str, duality_gap: float):
        super().__init__(f"{message} (duality gap {duality_gap:.3e})")
        self.duality_gap = duality_gap


class RankExceeded(RegressionError):
    pass


# ── ggm ────────────────────────────────────────────────────────────────────────

class EstimationError(NetworkError):
    pass


class IncompleteFits(EstimationError):
    pass


class InvalidPrecision(EstimationError):
    pass


class SingularCovariance(EstimationError):
    pass


class GeneCapExceeded(EstimationError):
    pass


# ── fdr ────────────────────────────────────────────────────────────────────────

class FdrError(NetworkError):
    pass


class TooFewStatistics(FdrError):
    pass


class DegenerateDistribution(FdrError):
    pass


class InvalidThreshold(FdrError):
    pass


class RocUndefined(FdrError):
    pass


# ── netgen ─────────────────────────────────────────────────────────────────────

class GenerationError(NetworkError):
    pass


class GenerationFailure(GenerationError):
    pass


# ── metrics ────────────────────────────────────────────────────────────────────

class MetricsError(NetworkError):
    pass


class DimensionError(MetricsError):
    pass


class KappaUndefined(MetricsError):
    pass


class SubsampleError(MetricsError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"estimation failed on subsample {index}: {cause}")
        self.index = index
        self.cause = cause
