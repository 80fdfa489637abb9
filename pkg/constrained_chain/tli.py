"""
Truncated Lanczos iterations (TLI).

The Krylov space of a Fock state is built one vector at a time. At order m
the tridiagonal matrix T(m) defines an effective Hamiltonian on the first m
Lanczos vectors, and its return probability |(exp(-i T t))_00|^2 is compared
with the exact one through the time-averaged cost

    I(m) = (1 / t_max) * integral_0^t_max |L(t) - L_TLI(m, t)| dt

m_c is the smallest order with I(m) <= cost_tol.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.integrate
import scipy.linalg

from constrained_chain.errors import GridMismatchError
from constrained_chain.fock_sector import SparseHamiltonian
from constrained_chain.lls import (
    DEFAULT_MIN_CROSSINGS,
    DEFAULT_THRESHOLD,
    LLSCriterion,
    candidate_indices,
    crossing_counts,
    sector_crossings,
)
from constrained_chain.parallel import run_tasks
from constrained_chain.propagator import (
    ReturnSeries,
    TimeGrid,
    batch_return_probabilities,
    resolve_method,
    return_probability,
)
from constrained_chain.spectral import diagonalize
from constrained_chain.sweep import (
    DEFAULT_DENSE_LIMIT,
    RealisationTask,
    SweepSettings,
    realisation_tasks,
    realise,
)

logger = logging.getLogger(__name__)

DEFAULT_COST_TOL = 0.01
DEFAULT_BREAKDOWN_TOL = 1e-10

MC_COLUMNS = [
    "mu", "mu_over_N", "N", "realisation_index", "D_H", "n_lls", "mean_mc",
    "mean_mc_over_N", "mean_mc_over_DH", "sum_mc", "failed",
]


@dataclass(eq=False)
class LanczosBasis:
    """
    Krylov vectors alpha_0 .. alpha_{m-1} of one Fock state.

    diagonal holds u_0 .. u_{m-1}, offdiagonal v_1 .. v_{m-1}. Once the
    recursion breaks down the basis spans an invariant subspace, exhausted is
    set and krylov_dim records its size.
    """

    state: int
    vectors: List[np.ndarray] = field(default_factory=list, repr=False)
    diagonal: List[float] = field(default_factory=list)
    offdiagonal: List[float] = field(default_factory=list)
    exhausted: bool = False
    krylov_dim: Optional[int] = None
    breakdown_tol: float = DEFAULT_BREAKDOWN_TOL
    _last_product: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def order(self) -> int:
        return len(self.vectors)

    def tridiagonal(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array(self.diagonal), np.array(self.offdiagonal)

    def matrix(self) -> np.ndarray:
        """Stored vectors as the columns of V."""
        return np.column_stack(self.vectors)

    def orthonormality_error(self) -> float:
        V = self.matrix()
        return float(np.max(np.abs(V.T @ V - np.eye(self.order))))


def _append_vector(H: SparseHamiltonian, basis: LanczosBasis, vector: np.ndarray) -> None:
    product = H.matrix @ vector
    basis.vectors.append(vector)
    basis.diagonal.append(float(vector @ product))
    basis._last_product = product


def lanczos_extend(
    H: SparseHamiltonian,
    alpha: int,
    target_order: int,
    basis: Optional[LanczosBasis] = None,
    breakdown_tol: float = DEFAULT_BREAKDOWN_TOL,
) -> LanczosBasis:
    """
    Grow the Lanczos basis of alpha to target_order vectors, or until breakdown.

    Each new vector is H alpha_n - u_n alpha_n - v_n alpha_{n-1}, then fully
    re-orthogonalized (twice) against every stored vector. An existing basis
    is extended in place.

    Raises:
        StateNotInSectorError: If alpha is not in the sector
        ValueError: If target_order < 1
    """
    if target_order < 1:
        raise ValueError(f"target_order must be at least 1, got {target_order}")
    if basis is None:
        basis = LanczosBasis(state=int(alpha), breakdown_tol=breakdown_tol)
        _append_vector(H, basis, H.basis.basis_vector(alpha))

    target_order = min(target_order, H.dimension)
    while basis.order < target_order and not basis.exhausted:
        n = basis.order - 1
        w = basis._last_product - basis.diagonal[n] * basis.vectors[n]
        if n > 0:
            w = w - basis.offdiagonal[n - 1] * basis.vectors[n - 1]
        V = basis.matrix()
        for _ in range(2):
            w = w - V @ (V.T @ w)
        norm = float(np.linalg.norm(w))
        if norm < basis.breakdown_tol:
            basis.exhausted = True
            basis.krylov_dim = basis.order
            logger.debug(f"Lanczos breakdown for state {basis.state} at m={basis.order}")
            break
        basis.offdiagonal.append(norm)
        _append_vector(H, basis, w / norm)

    if not basis.exhausted and basis.order == H.dimension:
        basis.exhausted = True
        basis.krylov_dim = basis.order
    return basis


def tli_return(basis: LanczosBasis, grid: TimeGrid) -> ReturnSeries:
    """Return probability of alpha under the order-m effective Hamiltonian."""
    diagonal, offdiagonal = basis.tridiagonal()
    if diagonal.size == 1:
        values = np.ones(grid.times.size)
    else:
        theta, rotation = scipy.linalg.eigh_tridiagonal(diagonal, offdiagonal)
        weights = rotation[0, :] ** 2
        amplitude = np.exp(-1j * np.outer(grid.times, theta)) @ weights
        values = np.clip(np.abs(amplitude) ** 2, 0.0, 1.0)
        values[0] = 1.0
    return ReturnSeries(grid=grid, values=values, state=basis.state)


def cost(exact: ReturnSeries, approx: ReturnSeries) -> float:
    """
    Time-averaged absolute deviation, trapezoid rule on the shared grid.

    Raises:
        GridMismatchError: If the two series sit on different grids
    """
    if not exact.grid.matches(approx.grid) or exact.values.shape != approx.values.shape:
        raise GridMismatchError(
            f"cannot compare grids ({exact.grid.t_max}, {exact.grid.dt}) "
            f"and ({approx.grid.t_max}, {approx.grid.dt})"
        )
    deviation = np.abs(exact.values - approx.values)
    times = exact.grid.times
    if times.size == 1:
        return float(deviation[0])
    return float(scipy.integrate.trapezoid(deviation, times) / times[-1])


@dataclass(frozen=True)
class TliResult:
    state: int
    m_c: int
    achieved_cost: float
    krylov_dim: Optional[int] = None
    previous_cost: Optional[float] = None


def find_mc(
    H: SparseHamiltonian,
    alpha: int,
    grid: TimeGrid,
    cost_tol: float = DEFAULT_COST_TOL,
    exact: Optional[ReturnSeries] = None,
    full_krylov: bool = False,
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    breakdown_tol: float = DEFAULT_BREAKDOWN_TOL,
) -> TliResult:
    """
    Smallest Lanczos order whose return probability reproduces the exact one.

    Orders are tried as m = 1, 2, 3, ... on one incrementally extended basis.
    A breakdown before the tolerance is met ends the search at m_c = D_K.

    Args:
        exact: Precomputed exact L(t) on grid; evolved here when omitted
        full_krylov: Keep extending after m_c until breakdown to report D_K
    """
    if exact is None:
        exact = return_probability(H, alpha, grid, method=method, dense_limit=dense_limit)

    basis = lanczos_extend(H, alpha, 1, breakdown_tol=breakdown_tol)
    previous = None
    while True:
        current = cost(exact, tli_return(basis, grid))
        if current <= cost_tol:
            break
        if basis.exhausted:
            logger.warning(
                f"State {alpha}: cost {current:.3e} above tolerance at the full Krylov "
                f"dimension {basis.order}"
            )
            break
        previous = current
        lanczos_extend(H, alpha, basis.order + 1, basis)

    m_c = basis.order
    if full_krylov:
        lanczos_extend(H, alpha, H.dimension, basis)
    return TliResult(
        state=int(alpha),
        m_c=m_c,
        achieved_cost=current,
        krylov_dim=basis.krylov_dim,
        previous_cost=previous,
    )


@dataclass(frozen=True)
class McPoint:
    """
    Per-mu m_c averages.

    mean_* average per-realisation means over realisations with at least one
    LLS; lls_weighted_* average over all LLS pooled together.
    """

    mu: float
    mu_over_n: float
    n_sites: int
    mean_mc: float
    mean_mc_over_n: float
    mean_mc_over_dh: float
    lls_weighted_mc: float
    lls_weighted_mc_over_dh: float
    n_lls_used: int
    realisations: int
    without_lls: int
    excluded: int


def _realisation_mc(
    task: RealisationTask, grid: TimeGrid, criterion: LLSCriterion, cost_tol: float
) -> dict:
    s = task.settings
    row = {
        "mu": task.mu,
        "mu_over_N": task.mu_over_n,
        "N": task.n_sites,
        "realisation_index": task.realisation_index,
        "D_H": 0,
        "n_lls": 0,
        "mean_mc": np.nan,
        "mean_mc_over_N": np.nan,
        "mean_mc_over_DH": np.nan,
        "sum_mc": 0,
        "failed": False,
    }
    try:
        _, basis, H = realise(task)
        row["D_H"] = basis.dimension
        thresholds = np.array([criterion.threshold])
        if resolve_method(H, s.method, s.dense_limit) == "exact":
            spectrum = diagonalize(H, keep_vectors=True, dense_limit=s.dense_limit)
            indices, _ = candidate_indices(
                H.dimension, s.candidate_cap, s.seed, task.realisation_index
            )
            probabilities = batch_return_probabilities(spectrum, indices, grid)
            lls_rows = np.flatnonzero(
                crossing_counts(probabilities, thresholds)[:, 0] >= criterion.min_crossings
            )
            lls_states = basis.states[indices[lls_rows]]
            exact = {
                int(st): ReturnSeries(grid, probabilities[r], int(st))
                for st, r in zip(lls_states, lls_rows)
            }
        else:
            states, crossings, _ = sector_crossings(
                H, grid, thresholds, s.candidate_cap, s.seed, task.realisation_index,
                s.method, s.dense_limit, s.krylov_dim, s.substep_tol,
            )
            exact = {
                int(st): return_probability(
                    H, int(st), grid, method="krylov",
                    krylov_dim=s.krylov_dim, substep_tol=s.substep_tol,
                )
                for st in states[crossings[:, 0] >= criterion.min_crossings]
            }

        mcs = np.array(
            [
                find_mc(H, st, grid, cost_tol, exact=series, breakdown_tol=s.breakdown_tol).m_c
                for st, series in exact.items()
            ]
        )
    except Exception:
        logger.exception(f"m_c search failed for realisation {task.realisation_index}")
        row["failed"] = True
        return row

    row["n_lls"] = int(mcs.size)
    if mcs.size:
        row.update(
            mean_mc=float(mcs.mean()),
            mean_mc_over_N=float(mcs.mean() / task.n_sites),
            mean_mc_over_DH=float(mcs.mean() / basis.dimension),
            sum_mc=int(mcs.sum()),
        )
    return row


def mc_realisations(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    grid: TimeGrid,
    criterion: LLSCriterion = LLSCriterion(),
    cost_tol: float = DEFAULT_COST_TOL,
    settings: SweepSettings = SweepSettings(),
) -> pd.DataFrame:
    """Per-realisation m_c table, one row per realisation."""
    tasks = realisation_tasks(mu_points, n_sites, n_realisations, settings)
    logger.info(f"TLI sweep: N={n_sites}, {len(tasks)} realisations, cost_tol={cost_tol}")
    worker = partial(_realisation_mc, grid=grid, criterion=criterion, cost_tol=cost_tol)
    return pd.DataFrame(run_tasks(worker, tasks, settings.workers), columns=MC_COLUMNS)


def aggregate_mc(table: pd.DataFrame) -> List[McPoint]:
    table = table.sort_values(["N", "mu", "realisation_index"], kind="mergesort")
    points = []
    for (n_sites, mu), group in table.groupby(["N", "mu"], sort=True):
        ok = group[~group["failed"].astype(bool)]
        with_lls = ok[ok["n_lls"] > 0]
        n_lls = int(with_lls["n_lls"].sum())
        pooled_over_dh = (with_lls["sum_mc"] / with_lls["D_H"]).sum()
        points.append(
            McPoint(
                mu=float(mu),
                mu_over_n=float(group["mu_over_N"].iloc[0]),
                n_sites=int(n_sites),
                mean_mc=float(with_lls["mean_mc"].mean()) if len(with_lls) else np.nan,
                mean_mc_over_n=float(with_lls["mean_mc_over_N"].mean()) if len(with_lls) else np.nan,
                mean_mc_over_dh=float(with_lls["mean_mc_over_DH"].mean()) if len(with_lls) else np.nan,
                lls_weighted_mc=float(with_lls["sum_mc"].sum() / n_lls) if n_lls else np.nan,
                lls_weighted_mc_over_dh=float(pooled_over_dh / n_lls) if n_lls else np.nan,
                n_lls_used=n_lls,
                realisations=int(len(with_lls)),
                without_lls=int(len(ok) - len(with_lls)),
                excluded=int(len(group) - len(ok)),
            )
        )
    return points


def mc_statistics(
    mu_points: Sequence[Tuple[float, float]],
    n_sites: int,
    n_realisations: int,
    grid: TimeGrid,
    criterion: LLSCriterion = LLSCriterion(DEFAULT_THRESHOLD, DEFAULT_MIN_CROSSINGS),
    cost_tol: float = DEFAULT_COST_TOL,
    settings: SweepSettings = SweepSettings(),
) -> List[McPoint]:
    """Mean m_c, m_c/N and m_c/D_H per mu point."""
    table = mc_realisations(mu_points, n_sites, n_realisations, grid, criterion, cost_tol, settings)
    points = aggregate_mc(table)
    for point in points:
        logger.info(
            f"N={n_sites} mu/N={point.mu_over_n:.3f}: <m_c>={point.mean_mc:.2f} "
            f"from {point.n_lls_used} LLS in {point.realisations} realisations "
            f"({point.without_lls} without LLS)"
        )
    return points
