"""Ground-truth partial-correlation networks and multivariate normal samples drawn from them."""
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, List, NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_serializer, model_validator
from scipy import linalg

from services.dataset import ExpressionMatrix, default_labels
from services.errors import GenerationError, GenerationFailure
from services.ggm import PartialCorrelationMatrix, upper_indices
from services.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 10
DEFAULT_DENSITIES = (0.05, 0.10, 0.15, 0.20, 0.25)


# ── Topologies ─────────────────────────────────────────────────────────────────

class TopologyKind(str, Enum):
    DENSITY = "density"
    CLUSTERS = "clusters"
    STARS = "stars"


class Topology(BaseModel):
    """Written as ``density:0.05``, ``clusters:2`` or ``stars:3``."""
    model_config = ConfigDict(frozen=True)

    kind: TopologyKind
    value: float

    @model_validator(mode="before")
    @classmethod
    def _from_label(cls, data):
        if isinstance(data, str):
            kind, sep, value = data.partition(":")
            if not sep:
                raise ValueError(f"topology {data!r} must look like density:0.05, clusters:2 or stars:3")
            return {"kind": kind.strip().lower(), "value": value.strip()}
        return data

    @model_validator(mode="after")
    def _check_value(self):
        if self.kind is TopologyKind.DENSITY:
            if not 0.0 < self.value < 1.0:
                raise ValueError(f"density must lie in (0, 1), got {self.value}")
        elif self.value < 1 or self.value != int(self.value):
            raise ValueError(f"{self.kind.value} needs a positive whole number of groups, got {self.value}")
        return self

    @model_serializer
    def _serialize(self) -> str:
        return self.label

    @property
    def groups(self) -> int:
        return int(self.value)

    @property
    def label(self) -> str:
        if self.kind is TopologyKind.DENSITY:
            return f"density:{self.value:g}"
        return f"{self.kind.value}:{self.groups}"


def parse_topology(text: str) -> Topology:
    return Topology.model_validate(text)


# ── Ground truth ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TrueNetwork:
    pcor: PartialCorrelationMatrix
    topology: Topology

    @property
    def p(self) -> int:
        return self.pcor.p

    @property
    def edges(self) -> np.ndarray:
        return self.pcor.nonzero_mask()

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.edges))

    def precision(self) -> np.ndarray:
        """Unit-diagonal precision whose partial correlations are P."""
        return 2.0 * np.eye(self.p) - self.pcor.rho

    def correlation(self) -> np.ndarray:
        covariance = linalg.inv(self.precision())
        scale = np.sqrt(np.diag(covariance))
        correlation = covariance / np.outer(scale, scale)
        return 0.5 * (correlation + correlation.T)


def _is_positive_definite(matrix: np.ndarray) -> bool:
    try:
        linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError:
        return False
    return True


def _nonzero_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    values = rng.uniform(-1.0, 1.0, size=size)
    while np.any(values == 0.0):
        zero = values == 0.0
        values[zero] = rng.uniform(-1.0, 1.0, size=int(zero.sum()))
    return values


def _feasible_pcor(p: int, edge_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Drawn values a_ij with diagonal s_i + 1 (s_i = row sum of |a_ij|), scaled to unit diagonal."""
    i, j = upper_indices(p)
    drawn = np.zeros((p, p))
    values = _nonzero_uniform(rng, int(edge_mask.sum()))
    drawn[i[edge_mask], j[edge_mask]] = values
    drawn[j[edge_mask], i[edge_mask]] = values
    dominance = np.abs(drawn).sum(axis=1) + 1.0
    rho = drawn / np.sqrt(np.outer(dominance, dominance))
    np.fill_diagonal(rho, 1.0)
    return rho


def _generate(p: int, topology: Topology, seed: int, choose_edges) -> TrueNetwork:
    if p < 2:
        raise GenerationError(f"need at least 2 genes, got {p}")
    for attempt in range(MAX_ATTEMPTS):
        rng = make_rng(derive_seed(seed, attempt))
        mask = choose_edges(rng)
        rho = _feasible_pcor(p, mask, rng)
        if _is_positive_definite(2.0 * np.eye(p) - rho):
            return TrueNetwork(PartialCorrelationMatrix(rho), topology)
        logger.warning("%s: draw %d is not positive definite, retrying", topology.label, attempt + 1)
    raise GenerationFailure(f"{topology.label} with p={p}: no positive definite draw in {MAX_ATTEMPTS} attempts")


def density_edge_count(p: int, density: float) -> int:
    # round half up
    return int(math.floor(density * p * (p - 1) / 2 + 0.5))


def simulate_pcor_density(p: int, density: float, seed: int) -> TrueNetwork:
    topology = Topology(kind=TopologyKind.DENSITY, value=density)
    total = p * (p - 1) // 2
    count = density_edge_count(p, density)

    def choose(rng):
        mask = np.zeros(total, dtype=bool)
        mask[rng.choice(total, size=count, replace=False)] = True
        return mask

    return _generate(p, topology, seed, choose)


def group_members(p: int, groups: int) -> List[np.ndarray]:
    """Genes split as evenly as possible, every gene in a group."""
    if groups > p:
        raise GenerationError(f"{groups} groups requested for {p} genes")
    return np.array_split(np.arange(p), groups)


def topology_edges(p: int, topology: Topology) -> np.ndarray:
    adjacency = np.zeros((p, p), dtype=bool)
    for members in group_members(p, topology.groups):
        if topology.kind is TopologyKind.CLUSTERS:
            adjacency[np.ix_(members, members)] = True
        else:
            center = members[0]
            adjacency[center, members] = True
            adjacency[members, center] = True
    np.fill_diagonal(adjacency, False)
    return adjacency[upper_indices(p)]


def simulate_pcor_topology(p: int, topology: Union[Topology, str], seed: int) -> TrueNetwork:
    topology = Topology.model_validate(topology)
    if topology.kind is TopologyKind.DENSITY:
        return simulate_pcor_density(p, topology.value, seed)
    mask = topology_edges(p, topology)
    return _generate(p, topology, seed, lambda rng: mask)


# ── Sampling ───────────────────────────────────────────────────────────────────

def sample_data(truth: TrueNetwork, n: int, seed: int) -> ExpressionMatrix:
    """n draws from N(0, Σ(P)) with Σ(P) the unit-diagonal covariance implied by P."""
    precision = truth.precision()
    lower = linalg.cholesky(precision, lower=True)
    inverse_lower = linalg.solve_triangular(lower, np.eye(truth.p), lower=True)
    scale = np.sqrt(np.sum(inverse_lower ** 2, axis=0))
    noise = make_rng(seed).standard_normal((n, truth.p))
    # x = L^{-T} z has covariance Ω^{-1}
    draws = linalg.solve_triangular(lower, noise.T, lower=True, trans="T").T
    return ExpressionMatrix(values=draws / scale, gene_labels=default_labels(truth.p))


def sample_null_statistics(count: int, kappa: float, seed: int) -> np.ndarray:
    """Draws of a sample correlation under independence: r² ~ Beta(½, (κ−1)/2), random sign."""
    rng = make_rng(seed)
    magnitude = np.sqrt(rng.beta(0.5, 0.5 * (kappa - 1.0), size=count))
    return np.where(rng.random(count) < 0.5, -magnitude, magnitude)


# ── Scenario grid ──────────────────────────────────────────────────────────────

class Cell(NamedTuple):
    topology: Topology
    n: int
    replication: int


class ScenarioGrid(BaseModel):
    p: PositiveInt = 100
    sample_sizes: List[PositiveInt] = Field(default_factory=lambda: list(range(25, 201, 25)))
    replications: PositiveInt = 20
    topologies: List[Topology] = Field(
        default_factory=lambda: [Topology(kind=TopologyKind.DENSITY, value=d) for d in DEFAULT_DENSITIES])
    root_seed: int = Field(default=0, ge=0)

    @field_validator("sample_sizes", "topologies")
    @classmethod
    def _not_empty(cls, values):
        if not values:
            raise ValueError("must not be empty")
        return values

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ScenarioGrid":
        return cls.model_validate(json.loads(Path(path).read_text()))

    def cells(self) -> Iterator[Cell]:
        for topology in self.topologies:
            for n in self.sample_sizes:
                for replication in range(self.replications):
                    yield Cell(topology, n, replication)

    def truth_seed(self, cell: Cell) -> int:
        return derive_seed(self.root_seed, cell.topology.label, cell.n, cell.replication, "truth")

    def data_seed(self, cell: Cell) -> int:
        return derive_seed(self.root_seed, cell.topology.label, cell.n, cell.replication, "data")
