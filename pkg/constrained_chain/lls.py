"""
Long-lived state (LLS) detection and ensemble statistics.

A Fock state is an LLS when its return probability rises from below the
threshold L_th to at or above it at least N_th times on the time grid.
Ensemble sweeps record one row per (realisation, threshold) in a pandas
table; every summary statistic is recomputed from that table after sorting
by realisation index, so split runs merge into exactly the same numbers as
one monolithic run.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.random import PCG64, Generator, SeedSequence

from constrained_chain.errors import ConfigError, GridMismatchError, ProfileMismatchError
from constrained_chain.fock_sector import SectorBasis, SparseHamiltonian
from constrained_chain.parallel import run_tasks
from constrained_chain.propagator import (
    DEFAULT_DT,
    ReturnSeries,
    TimeGrid,
    batch_return_probabilities,
    default_t_max,
    resolve_method,
    return_probability,
)
from constrained_chain.spectral import diagonalize
from constrained_chain.sweep import (
    DEFAULT_CANDIDATE_CAP,
    DEFAULT_DENSE_LIMIT,
    RealisationTask,
    SweepSettings,
    realisation_tasks,
    realise,
)

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_CROSSINGS = 3
_SCAN_STREAM = 2**31 - 1
_BATCH = 256

GROUP_COLUMNS = ["threshold", "min_crossings", "N", "mu"]
MATCH_COLUMNS = ["N", "t_max", "dt", "threshold", "min_crossings", "epsilon", "min_range", "boundary"]
REALISATION_COLUMNS = [
    "mu", "mu_over_N", "N", "realisation_index", "seed", "D_H", "n_scanned",
    "sampled", "n_lls", "rho", "failed", "threshold", "min_crossings", "t_max",
    "dt", "epsilon", "min_range", "boundary",
]


@dataclass(frozen=True)
class LLSCriterion:
    threshold: float = DEFAULT_THRESHOLD
    min_crossings: int = DEFAULT_MIN_CROSSINGS

    def __post_init__(self):
        problems = []
        if not 0.0 < self.threshold < 1.0:
            problems.append(f"threshold={self.threshold} must lie in (0, 1)")
        if self.min_crossings < 1:
            problems.append(f"min_crossings={self.min_crossings} must be at least 1")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class LLSRecord:
    state: int
    crossings: int
    qualifies: bool


@dataclass(frozen=True)
class ScanResult:
    """
    Classification of a sector's states.

    When the sector was larger than the candidate cap, records cover a
    uniform sample and rho is the sample fraction.
    """

    records: List[LLSRecord] = field(repr=False)
    n_lls: int
    rho: float
    dimension: int
    n_scanned: int
    sampled: bool

    @property
    def lls_states(self) -> List[int]:
        return [r.state for r in self.records if r.qualifies]

    @property
    def n_lls_estimate(self) -> float:
        return self.rho * self.dimension


@dataclass(frozen=True)
class EnsemblePoint:
    mu: float
    mu_over_n: float
    n_sites: int
    realisations: int
    p: float
    p_err: float
    rho_mean: float
    rho_stderr: float
    mean_sector_dim: float
    excluded: int
    threshold: float = DEFAULT_THRESHOLD
    min_crossings: int = DEFAULT_MIN_CROSSINGS


def count_threshold_crossings(series: Union[ReturnSeries, np.ndarray], threshold: float) -> int:
    """Number of k >= 1 with L(t_{k-1}) < threshold <= L(t_k)."""
    values = series.values if isinstance(series, ReturnSeries) else np.asarray(series)
    if values.size < 2:
        return 0
    return int(np.count_nonzero((values[:-1] < threshold) & (values[1:] >= threshold)))


def classify_lls(series: ReturnSeries, criterion: LLSCriterion) -> LLSRecord:
    crossings = count_threshold_crossings(series, criterion.threshold)
    return LLSRecord(
        state=int(series.state) if series.state is not None else -1,
        crossings=crossings,
        qualifies=crossings >= criterion.min_crossings,
    )


def crossing_counts(probabilities: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Upward crossings per row (state) and threshold."""
    before = probabilities[:, :-1, None] < thresholds[None, None, :]
    after = probabilities[:, 1:, None] >= thresholds[None, None, :]
    return np.count_nonzero(before & after, axis=1)


def candidate_indices(
    dimension: int, candidate_cap: int, seed: int = 0, realisation_index: int = 0
) -> Tuple[np.ndarray, bool]:
    """All basis indices, or a sorted uniform sample of candidate_cap of them."""
    if dimension <= candidate_cap:
        return np.arange(dimension), False
    sequence = SeedSequence(entropy=int(seed), spawn_key=(int(realisation_index), _SCAN_STREAM))
    rng = Generator(PCG64(sequence))
    return np.sort(rng.choice(dimension, size=candidate_cap, replace=False)), True


def _krylov_chunk(
    states: np.ndarray,
    H: SparseHamiltonian,
    grid: TimeGrid,
    thresholds: np.ndarray,
    krylov_dim: int,
    substep_tol: float,
) -> np.ndarray:
    rows = []
    for state in states:
        series = return_probability(
            H, int(state), grid, method="krylov", krylov_dim=krylov_dim, substep_tol=substep_tol
        )
        rows.append(crossing_counts(series.values[None, :], thresholds)[0])
    return np.array(rows).reshape(len(states), thresholds.size)


def sector_crossings(
    H: SparseHamiltonian,
    grid: TimeGrid,
    thresholds: Sequence[float],
    candidate_cap: int = DEFAULT_CANDIDATE_CAP,
    seed: int = 0,
    realisation_index: int = 0,
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    krylov_dim: int = 30,
    substep_tol: float = 1e-10,
    workers: int = 1,
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """
    Upward crossing counts of every candidate state for several thresholds.

    One evolution per state serves every threshold.

    Returns:
        (states, crossings of shape (len(states), len(thresholds)), sampled)
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    indices, sampled = candidate_indices(H.dimension, candidate_cap, seed, realisation_index)
    states = H.basis.states[indices]

    if resolve_method(H, method, dense_limit) == "exact":
        spectrum = diagonalize(H, keep_vectors=True, dense_limit=dense_limit)
        crossings = np.empty((indices.size, thresholds.size), dtype=np.int64)
        for start in range(0, indices.size, _BATCH):
            chunk = indices[start:start + _BATCH]
            probabilities = batch_return_probabilities(spectrum, chunk, grid)
            crossings[start:start + chunk.size] = crossing_counts(probabilities, thresholds)
        return states, crossings, sampled

    worker = partial(
        _krylov_chunk,
        H=H,
        grid=grid,
        thresholds=thresholds,
        krylov_dim=krylov_dim,
        substep_tol=substep_tol,
    )
    chunks = [c for c in np.array_split(states, max(1, workers)) if c.size]
    logger.info(f"Krylov scan of {states.size} states in {len(chunks)} chunks")
    crossings = np.concatenate(run_tasks(worker, chunks, workers), axis=0)
    return states, crossings, sampled


def scan_sector(
    H: SparseHamiltonian,
    basis: SectorBasis,
    grid: TimeGrid,
    criterion: LLSCriterion = LLSCriterion(),
    candidate_cap: int = DEFAULT_CANDIDATE_CAP,
    seed: int = 0,
    realisation_index: int = 0,
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    krylov_dim: int = 30,
    substep_tol: float = 1e-10,
    workers: int = 1,
) -> ScanResult:
    """
    Evolve and classify every state of a sector (or a uniform sample of it).

    Returns:
        ScanResult with rho = N_LLS / D_H, or the sample fraction when sampled

    Raises:
        ProfileMismatchError: If basis is not the Hamiltonian's basis
        PropagationError: With the offending state, if a Krylov evolution fails
    """
    if basis is not H.basis and not np.array_equal(basis.states, H.basis.states):
        raise ProfileMismatchError("basis does not belong to this Hamiltonian")

    states, crossings, sampled = sector_crossings(
        H, grid, [criterion.threshold], candidate_cap, seed, realisation_index,
        method, dense_limit, krylov_dim, substep_tol, workers,
    )
    counts = crossings[:, 0]
    records = [
        LLSRecord(state=int(s), crossings=int(c), qualifies=bool(c >= criterion.min_crossings))
        for s, c in zip(states, counts)
    ]
    n_lls = int(np.count_nonzero(counts >= criterion.min_crossings))
    rho = n_lls / len(records) if records else 0.0
    if sampled:
        logger.info(f"Sampled {len(records)} of {H.dimension} states; rho estimate {rho:.4g}")
    return ScanResult(
        records=records,
        n_lls=n_lls,
        rho=rho,
        dimension=H.dimension,
        n_scanned=len(records),
        sampled=sampled,
    )


def _realisation_rows(
    task: RealisationTask, grid: TimeGrid, thresholds: Sequence[float], min_crossings: int
) -> List[dict]:
    s = task.settings
    base = {
        "mu": task.mu,
        "mu_over_N": task.mu_over_n,
        "N": task.n_sites,
        "realisation_index": task.realisation_index,
        "seed": s.seed,
        "min_crossings": min_crossings,
        "t_max": grid.t_max,
        "dt": grid.dt,
        "epsilon": s.epsilon,
        "min_range": s.min_range,
        "boundary": s.boundary,
    }
    try:
        _, basis, H = realise(task)
        _, crossings, sampled = sector_crossings(
            H, grid, thresholds, s.candidate_cap, s.seed, task.realisation_index,
            s.method, s.dense_limit, s.krylov_dim, s.substep_tol,
        )
    except Exception:
        logger.exception(
            f"Realisation {task.realisation_index} at mu={task.mu} failed; excluding it"
        )
        return [
            dict(base, threshold=th, D_H=0, n_scanned=0, sampled=False, n_lls=0,
                 rho=0.0, failed=True)
            for th in thresholds
        ]

    rows = []
    for j, th in enumerate(thresholds):
        n_lls = int(np.count_nonzero(crossings[:, j] >= min_crossings))
        rows.append(
            dict(
                base,
                threshold=float(th),
                D_H=basis.dimension,
                n_scanned=int(crossings.shape[0]),
                sampled=bool(sampled),
                n_lls=n_lls,
                rho=n_lls / crossings.shape[0],
                failed=False,
            )
        )
    return rows


def ensemble_realisations(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    grid: TimeGrid,
    thresholds: Sequence[float] = (DEFAULT_THRESHOLD,),
    min_crossings: int = DEFAULT_MIN_CROSSINGS,
    settings: SweepSettings = SweepSettings(),
) -> pd.DataFrame:
    """
    Per-realisation LLS table for a mu sweep, one row per threshold.

    Failed realisations are logged and kept as rows with failed=True.
    """
    tasks = realisation_tasks(mu_points, n_sites, n_realisations, settings)
    logger.info(
        f"LLS sweep: N={n_sites}, {len(mu_points)} mu points x {n_realisations} "
        f"realisations, thresholds={list(thresholds)}"
    )
    worker = partial(
        _realisation_rows, grid=grid, thresholds=list(thresholds), min_crossings=min_crossings
    )
    rows = [row for block in run_tasks(worker, tasks, settings.workers) for row in block]
    return pd.DataFrame(rows, columns=REALISATION_COLUMNS)


def _signature(table: pd.DataFrame) -> Dict[str, tuple]:
    return {col: tuple(sorted(table[col].unique().tolist())) for col in MATCH_COLUMNS}


def merge_realisation_tables(tables: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """
    Union of partial per-realisation tables.

    A realisation is identified by (seed, realisation_index) within its
    (threshold, N, mu) group; tables from different master seeds add up.

    Raises:
        GridMismatchError: If the tables disagree on N, grid, criterion or
            ensemble parameters
    """
    tables = [t for t in tables if not t.empty]
    if not tables:
        return pd.DataFrame(columns=REALISATION_COLUMNS)
    reference = _signature(tables[0])
    for k, table in enumerate(tables[1:], start=1):
        signature = _signature(table)
        if signature != reference:
            diff = [c for c in MATCH_COLUMNS if signature[c] != reference[c]]
            raise GridMismatchError(f"partial result {k} differs in {', '.join(diff)}")
    merged = pd.concat(tables, ignore_index=True)[REALISATION_COLUMNS]
    key = GROUP_COLUMNS + ["seed", "realisation_index"]
    merged = merged.sort_values(key + ["failed"], kind="mergesort")
    merged = merged.drop_duplicates(subset=key, keep="first")
    return merged.reset_index(drop=True)


def aggregate_realisations(table: pd.DataFrame) -> List[EnsemblePoint]:
    """
    Summary statistics per (threshold, N, mu) from a per-realisation table.

    p carries the binomial standard error; rho the sample standard error.
    """
    table = merge_realisation_tables([table])
    points = []
    for (threshold, min_crossings, n_sites, mu), group in table.groupby(GROUP_COLUMNS, sort=True):
        ok = group[~group["failed"].astype(bool)]
        n = len(ok)
        has_lls = (ok["n_lls"] > 0).to_numpy(dtype=np.float64)
        rho = ok["n_lls"].to_numpy(dtype=np.float64) / ok["n_scanned"].to_numpy(dtype=np.float64)
        p = float(has_lls.mean()) if n else float("nan")
        points.append(
            EnsemblePoint(
                mu=float(mu),
                mu_over_n=float(group["mu_over_N"].iloc[0]),
                n_sites=int(n_sites),
                realisations=n,
                p=p,
                p_err=float(np.sqrt(p * (1.0 - p) / n)) if n else float("nan"),
                rho_mean=float(rho.mean()) if n else float("nan"),
                rho_stderr=float(rho.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"),
                mean_sector_dim=float(ok["D_H"].mean()) if n else float("nan"),
                excluded=int(len(group) - n),
                threshold=float(threshold),
                min_crossings=int(min_crossings),
            )
        )
    return points


def ensemble_statistics(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    grid: TimeGrid,
    criterion: LLSCriterion = LLSCriterion(),
    settings: SweepSettings = SweepSettings(),
) -> List[EnsemblePoint]:
    """p and rho per mu point for one criterion."""
    table = ensemble_realisations(
        mu_points, n_sites, n_realisations, grid,
        [criterion.threshold], criterion.min_crossings, settings,
    )
    points = aggregate_realisations(table)
    for point in points:
        logger.info(
            f"N={n_sites} mu/N={point.mu_over_n:.3f}: p={point.p:.3f}+-{point.p_err:.3f}, "
            f"rho={point.rho_mean:.4g}+-{point.rho_stderr:.2g}, excluded={point.excluded}"
        )
    return points


def threshold_sweep(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    grid: TimeGrid,
    thresholds: Sequence[float] = (0.5, 0.6, 0.7),
    min_crossings: int = DEFAULT_MIN_CROSSINGS,
    settings: SweepSettings = SweepSettings(),
) -> Dict[float, List[EnsemblePoint]]:
    """Ensemble statistics for several thresholds from one set of evolutions."""
    for th in thresholds:
        LLSCriterion(th, min_crossings)
    table = ensemble_realisations(
        mu_points, n_sites, n_realisations, grid, thresholds, min_crossings, settings
    )
    by_threshold: Dict[float, List[EnsemblePoint]] = {float(th): [] for th in thresholds}
    for point in aggregate_realisations(table):
        by_threshold[point.threshold].append(point)
    return by_threshold


def size_scan(
    mu_over_n_values: Sequence[float],
    sizes: Sequence[int],
    n_realisations: int,
    criterion: LLSCriterion = LLSCriterion(),
    settings: SweepSettings = SweepSettings(),
    dt: float = DEFAULT_DT,
    t_max: Optional[float] = None,
) -> List[EnsemblePoint]:
    """p and rho against system size at fixed mu/N."""
    points = []
    for n_sites in sizes:
        grid = TimeGrid(t_max if t_max is not None else default_t_max(n_sites), dt)
        mu_points = [(f, round(f * n_sites, 12)) for f in mu_over_n_values]
        points.extend(
            ensemble_statistics(mu_points, n_sites, n_realisations, grid, criterion, settings)
        )
    return points
