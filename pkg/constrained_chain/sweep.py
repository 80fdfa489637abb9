"""
Shared plumbing for realisation sweeps over mu/N.

A sweep is a deterministic list of RealisationTask descriptors. Each one
is rebuilt from (seed, mu, realisation_index) inside whichever worker picks it
up, so results do not depend on worker count or completion order.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from constrained_chain.ensemble_config import (
    DEFAULT_EPSILON,
    DEFAULT_MIN_RANGE,
    Boundary,
    ConstraintProfile,
    sample_constraints,
)
from constrained_chain.fock_sector import (
    DEFAULT_MAX_DIMENSION,
    SectorBasis,
    SectorCache,
    SparseHamiltonian,
    sector_for,
)

logger = logging.getLogger(__name__)

DEFAULT_DENSE_LIMIT = 4096
DEFAULT_CANDIDATE_CAP = 50_000


@dataclass(frozen=True)
class SweepSettings:
    """Everything besides (mu, N, realisation) that fixes a realisation's result."""

    epsilon: int = DEFAULT_EPSILON
    min_range: int = DEFAULT_MIN_RANGE
    boundary: str = Boundary.PERIODIC.value
    seed: int = 0
    realisation_start: int = 0
    candidate_cap: int = DEFAULT_CANDIDATE_CAP
    method: str = "auto"
    dense_limit: int = DEFAULT_DENSE_LIMIT
    krylov_dim: int = 30
    substep_tol: float = 1e-10
    breakdown_tol: float = 1e-10
    max_dimension: int = DEFAULT_MAX_DIMENSION
    cache_dir: Optional[str] = None
    workers: int = 1


@dataclass(frozen=True)
class RealisationTask:
    mu: float
    mu_over_n: float
    n_sites: int
    realisation_index: int
    settings: SweepSettings


def realisation_tasks(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    settings: SweepSettings,
) -> List[RealisationTask]:
    """
    Task list for a sweep; every mu point runs realisation indices
    realisation_start .. realisation_start + n_realisations - 1 of its own
    stream, so splitting a sweep by mu range or by index range and merging
    gives the same realisations as one run.
    """
    if n_realisations < 1:
        raise ValueError(f"n_realisations must be at least 1, got {n_realisations}")
    if settings.realisation_start < 0:
        raise ValueError(f"realisation_start must be non-negative, got {settings.realisation_start}")
    return [
        RealisationTask(
            mu=mu,
            mu_over_n=mu_over_n,
            n_sites=n_sites,
            realisation_index=settings.realisation_start + k,
            settings=settings,
        )
        for mu_over_n, mu in mu_points
        for k in range(n_realisations)
    ]


def task_profile(task: RealisationTask) -> ConstraintProfile:
    s = task.settings
    return sample_constraints(
        mu=task.mu,
        epsilon=s.epsilon,
        n_sites=task.n_sites,
        min_range=s.min_range,
        boundary=Boundary(s.boundary),
        seed=s.seed,
        realisation_index=task.realisation_index,
    )


def realise(task: RealisationTask) -> Tuple[ConstraintProfile, SectorBasis, SparseHamiltonian]:
    """Profile, sector and Hamiltonian of one realisation."""
    profile = task_profile(task)
    cache = None
    if task.settings.cache_dir:
        cache = SectorCache(task.settings.cache_dir, task.settings.max_dimension)
    basis, H = sector_for(profile, task.settings.max_dimension, cache)
    return profile, basis, H
