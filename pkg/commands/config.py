from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from services.fdr import DEFAULT_THRESHOLD
from services.ggm import DEFAULT_GENE_CAP
from services.methods import ALL_METHODS, Method

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FAILED_CELLS = 3

# keys left out of manifest.json so reruns into another directory or with another worker count match
RUN_ONLY_FIELDS = {"out", "jobs", "db"}


class Command(str, Enum):
    SIMULATE = "simulate"
    ESTIMATE = "estimate"
    STABILITY = "stability"
    ROC = "roc"


def default_thresholds() -> List[float]:
    return [round(0.05 * step, 2) for step in range(21)]


class RunConfig(BaseModel):
    command: Command
    methods: List[Method] = Field(default_factory=lambda: list(ALL_METHODS))
    k: Union[int, Literal["loo"]] = 5
    fdr_threshold: float = Field(DEFAULT_THRESHOLD, gt=0, le=1)
    seed: int = Field(0, ge=0)
    jobs: int = 1
    out: Path = Path("results")
    standardize: bool = True
    cap_genes: int = Field(DEFAULT_GENE_CAP, ge=0)
    thresholds: List[float] = Field(default_factory=default_thresholds)
    db: Optional[str] = None
    R: int = Field(10, ge=2)
    drop_fraction: float = Field(0.1, gt=0, lt=0.5)
    header: bool = False

    @field_validator("methods")
    @classmethod
    def _methods_not_empty(cls, methods):
        if not methods:
            raise ValueError("at least one method is required")
        return list(dict.fromkeys(methods))

    @field_validator("k")
    @classmethod
    def _fold_count(cls, k):
        if k != "loo" and k < 2:
            raise ValueError("k must be at least 2, or 'loo'")
        return k

    @field_validator("jobs")
    @classmethod
    def _jobs(cls, jobs):
        if jobs == 0:
            raise ValueError("jobs must be positive, or negative to count back from all cores")
        return jobs

    @field_validator("thresholds")
    @classmethod
    def _thresholds(cls, thresholds):
        if not thresholds or any(not 0.0 <= t <= 1.0 for t in thresholds):
            raise ValueError("thresholds must lie in [0, 1]")
        return sorted(set(thresholds))

    def folds_for(self, n: int) -> int:
        return n if self.k == "loo" else self.k

    def manifest_dict(self) -> dict:
        return self.model_dump(mode="json", exclude=RUN_ONLY_FIELDS)
