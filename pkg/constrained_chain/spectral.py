"""
Dense spectra of sector Hamiltonians, eigenstate overlaps and level statistics.

Every sector graph is bipartite (each flip changes the number of up spins
by one), so each spectrum is symmetric about zero. Level statistics use the
gap ratio r_n = min(d_n, d_n+1) / max(d_n, d_n+1), whose mean is about
0.536 for GOE spectra and 2 ln 2 - 1 = 0.386 for Poisson spectra.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from constrained_chain.ensemble_config import has_lattice_symmetry
from constrained_chain.errors import (
    DimensionError,
    InsufficientLevelsError,
    MissingEigenvectorsError,
)
from constrained_chain.fock_sector import SectorBasis, SparseHamiltonian
from constrained_chain.parallel import run_tasks
from constrained_chain.sweep import (
    DEFAULT_DENSE_LIMIT,
    RealisationTask,
    SweepSettings,
    realisation_tasks,
    realise,
)

logger = logging.getLogger(__name__)

DEFAULT_DEGENERACY_TOL = 1e-8
GOE_MEAN_RATIO = 0.536
POISSON_MEAN_RATIO = 2.0 * np.log(2.0) - 1.0

# realisation outcomes in a level-statistics sweep
USED = "used"
SKIPPED = "skipped"
SYMMETRIC = "symmetric"


@dataclass(frozen=True, eq=False)
class SpectralData:
    """
    Eigen-decomposition of one sector Hamiltonian.

    eigenvectors holds one column per eigenvalue, or None when not retained.
    """

    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)
    basis: Optional[SectorBasis] = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return int(self.eigenvalues.size)


@dataclass(frozen=True)
class SpacingStats:
    ratios: np.ndarray = field(repr=False)
    mean: float
    n_levels_used: int
    degeneracy_tol: float
    n_collapsed: int = 0


@dataclass(frozen=True)
class LevelStatsPoint:
    mu: float
    mu_over_n: float
    n_sites: int
    mean_r: float
    stderr: float
    realisations: int
    skipped: int
    symmetric: int = 0


def diagonalize(
    H: SparseHamiltonian,
    keep_vectors: bool = True,
    dense_limit: int = DEFAULT_DENSE_LIMIT,
) -> SpectralData:
    """
    Full real-symmetric eigen-decomposition of a sector Hamiltonian.

    Eigenvectors are fixed so that each column's largest-magnitude component
    is positive.

    Raises:
        DimensionError: If D_H exceeds dense_limit
    """
    if H.dimension > dense_limit:
        raise DimensionError(f"D_H={H.dimension} exceeds dense limit {dense_limit}")

    dense = H.to_dense()
    if not keep_vectors:
        return SpectralData(eigenvalues=scipy.linalg.eigvalsh(dense), basis=H.basis)

    values, vectors = scipy.linalg.eigh(dense)
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return SpectralData(eigenvalues=values, eigenvectors=vectors * signs, basis=H.basis)


def overlaps(spec: SpectralData, alpha: int) -> pd.DataFrame:
    """
    Squared overlaps |<alpha|E_k>|^2 with every eigenstate.

    Returns:
        DataFrame with columns energy, overlap in eigenvalue order

    Raises:
        MissingEigenvectorsError: If the decomposition dropped its vectors
    """
    if spec.eigenvectors is None or spec.basis is None:
        raise MissingEigenvectorsError("overlaps need retained eigenvectors")
    row = spec.eigenvectors[spec.basis.index_of(alpha), :]
    return pd.DataFrame({"energy": spec.eigenvalues, "overlap": row ** 2})


def collapse_degenerate(eigenvalues: Sequence[float], degeneracy_tol: float) -> np.ndarray:
    """Sorted distinct levels; a level within tol of its predecessor is merged."""
    levels = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    if levels.size == 0:
        return levels
    keep = np.concatenate(([True], np.diff(levels) > degeneracy_tol))
    return levels[keep]


def spacing_ratios(
    eigenvalues: Sequence[float],
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    central_fraction: float = 1.0,
) -> SpacingStats:
    """
    Gap ratios of consecutive distinct levels.

    Args:
        eigenvalues: Spectrum in any order
        degeneracy_tol: Levels closer than this are merged first
        central_fraction: Fraction of distinct levels kept around the middle

    Raises:
        InsufficientLevelsError: If fewer than three distinct levels remain
    """
    raw = np.asarray(eigenvalues, dtype=np.float64)
    levels = collapse_degenerate(raw, degeneracy_tol)
    n_collapsed = raw.size - levels.size

    if 0 < central_fraction < 1:
        trim = int(round(levels.size * (1.0 - central_fraction) / 2.0))
        levels = levels[trim:levels.size - trim]

    if levels.size < 3:
        raise InsufficientLevelsError(
            f"need at least 3 distinct levels, have {levels.size}"
        )

    gaps = np.diff(levels)
    ratios = np.minimum(gaps[:-1], gaps[1:]) / np.maximum(gaps[:-1], gaps[1:])
    return SpacingStats(
        ratios=ratios,
        mean=float(ratios.mean()),
        n_levels_used=int(levels.size),
        degeneracy_tol=degeneracy_tol,
        n_collapsed=int(n_collapsed),
    )


def sample_poisson_levels(n_levels: int, rng: np.random.Generator) -> np.ndarray:
    """Uncorrelated levels: cumulative sums of unit exponential spacings."""
    return np.cumsum(rng.exponential(1.0, size=n_levels))


def sample_goe_levels(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Spectrum of a random real symmetric Gaussian matrix."""
    a = rng.standard_normal((dim, dim))
    return scipy.linalg.eigvalsh((a + a.T) / 2.0)


def _level_stats_worker(
    task: RealisationTask, degeneracy_tol: float, central_fraction: float
) -> Tuple[str, Optional[float]]:
    try:
        profile, basis, H = realise(task)
        if basis.dimension > task.settings.dense_limit:
            logger.info(
                f"Skipping realisation {task.realisation_index}: "
                f"D_H={basis.dimension} above dense limit"
            )
            return SKIPPED, None
        if has_lattice_symmetry(profile):
            logger.debug(f"Realisation {task.realisation_index} has a lattice symmetry: {profile.ranges}")
            return SYMMETRIC, None
        spectrum = diagonalize(H, keep_vectors=False, dense_limit=task.settings.dense_limit)
        return USED, spacing_ratios(spectrum.eigenvalues, degeneracy_tol, central_fraction).mean
    except Exception:
        logger.exception(f"Level statistics failed for realisation {task.realisation_index}")
        return SKIPPED, None
        spectrum = diagonalize(H, keep_vectors=False, dense_limit=task.settings.dense_limit)
        return spacing_ratios(spectrum.eigenvalues, degeneracy_tol, central_fraction).mean
    except Exception:
        logger.exception(f"Level statistics failed for realisation {task.realisation_index}")
        return None


def ensemble_level_stats(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    settings: SweepSettings = SweepSettings(),
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    central_fraction: float = 1.0,
) -> List[LevelStatsPoint]:
    """
    Mean gap ratio of the largest sector per mu, averaged over realisations.

    Args:
        mu_points: (mu/N, mu) pairs, as produced by ensemble_config.mu_grid
        n_sites: Chain length N
        n_realisations: Realisations per mu point
        settings: Seeds, draw interval and dense limit

    Returns:
        One LevelStatsPoint per mu; skipped counts realisations whose sector
        exceeded the dense limit or had too few distinct levels, symmetric
        those left out because a lattice symmetry maps the profile to itself
    """
    tasks = realisation_tasks(mu_points, n_sites, n_realisations, settings)
    logger.info(f"Level statistics over {len(tasks)} realisations at N={n_sites}")
    worker = partial(
        _level_stats_worker, degeneracy_tol=degeneracy_tol, central_fraction=central_fraction
    )
    results = run_tasks(worker, tasks, settings.workers)

    points = []
    for j, (mu_over_n, mu) in enumerate(mu_points):
        block = results[j * n_realisations:(j + 1) * n_realisations]
        values = np.array([value for status, value in block if status == USED])
        symmetric = sum(status == SYMMETRIC for status, _ in block)
        skipped = len(block) - values.size - symmetric
        stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else float("nan")
        point = LevelStatsPoint(
            mu=mu,
            mu_over_n=mu_over_n,
            n_sites=n_sites,
            mean_r=float(values.mean()) if values.size else float("nan"),
            stderr=stderr,
            realisations=int(values.size),
            skipped=int(skipped),
            symmetric=int(symmetric),
        )
        logger.info(
            f"mu/N={mu_over_n:.3f}: <r>={point.mean_r:.4f} "
            f"from {values.size} realisations ({skipped} skipped, {symmetric} symmetric)"
        )
        points.append(point)
    return points
