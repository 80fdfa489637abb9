"""
Time evolution inside a sector and the observables built on it.

Two propagators share one contract (a T x D_H array of states on a uniform
time grid):

- exact: expansion in the eigenbasis from spectral.diagonalize, for sectors
  up to the dense limit
- krylov: short-iterate Lanczos exponential per grid step with adaptive
  substepping on the a-posteriori error estimate

Return probabilities for many initial states in one sector are computed in
batches straight from the eigenbasis weights, which is what LLS scans use.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import scipy.linalg

from constrained_chain.errors import DimensionError, GridMismatchError, PropagationError
from constrained_chain.fock_sector import SparseHamiltonian, occupation_matrix
from constrained_chain.spectral import DEFAULT_DENSE_LIMIT, SpectralData, diagonalize

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.05
DEFAULT_KRYLOV_DIM = 30
DEFAULT_SUBSTEP_TOL = 1e-10
MAX_SUBSTEPS_PER_STEP = 4096
NORM_TOL = 1e-10
_BREAKDOWN = 1e-12
METHODS = ("auto", "exact", "krylov")


def default_t_max(n_sites: int) -> float:
    """Evolution horizon by system size: 18 up to N=20, 50 beyond."""
    return 18.0 if n_sites <= 20 else 50.0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * dt for k = 0 .. floor(t_max / dt)."""

    t_max: float
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.dt <= 0:
            raise DimensionError(f"dt must be positive, got {self.dt}")
        if self.t_max < 0 or (0 < self.t_max < self.dt):
            raise DimensionError(f"t_max={self.t_max} must be 0 or at least dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_max / self.dt + 1e-9))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def matches(self, other: "TimeGrid") -> bool:
        return self.n_steps == other.n_steps and math.isclose(self.dt, other.dt)


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    state: Optional[int] = None

    def to_frame(self) -> pd.DataFrame:
        """One row of L(t_k) under a header of times."""
        return pd.DataFrame([self.values], columns=np.round(self.grid.times, 10))


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """occupation[k, i] is the probability that spin i is up at t_k."""

    grid: TimeGrid
    occupation: np.ndarray = field(repr=False)

    def to_frame(self) -> pd.DataFrame:
        """One row per site under a header of times."""
        frame = pd.DataFrame(self.occupation.T, columns=np.round(self.grid.times, 10))
        frame.insert(0, "site", np.arange(self.occupation.shape[1]))
        return frame


def _check_state(H: SparseHamiltonian, psi0: np.ndarray) -> np.ndarray:
    psi0 = np.asarray(psi0)
    if psi0.shape != (H.dimension,):
        raise DimensionError(f"state of shape {psi0.shape} for D_H={H.dimension}")
    norm = np.linalg.norm(psi0)
    if abs(norm - 1.0) > NORM_TOL:
        raise DimensionError(f"initial state is not normalized (norm {norm:.3e})")
    return psi0


def resolve_method(H: SparseHamiltonian, method: str, dense_limit: int) -> str:
    if method not in METHODS:
        raise DimensionError(f"unknown propagation method {method!r}")
    if method == "auto":
        return "exact" if H.dimension <= dense_limit else "krylov"
    return method


def evolve_exact(
    H: SparseHamiltonian,
    psi0: np.ndarray,
    grid: TimeGrid,
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    spectrum: Optional[SpectralData] = None,
) -> np.ndarray:
    """
    psi(t_k) = sum_n exp(-i E_n t_k) |E_n><E_n|psi0> for every grid time.

    Returns:
        Complex array of shape (len(grid.times), D_H)

    Raises:
        DimensionError: Above the dense limit, or for an unnormalized state
    """
    psi0 = _check_state(H, psi0)
    if spectrum is None:
        spectrum = diagonalize(H, keep_vectors=True, dense_limit=dense_limit)
    vectors = spectrum.eigenvectors
    coefficients = vectors.T @ psi0
    phases = np.exp(-1j * np.outer(grid.times, spectrum.eigenvalues))
    return (phases * coefficients[None, :]) @ vectors.T


def _lanczos_block(H: SparseHamiltonian, psi: np.ndarray, krylov_dim: int):
    """Orthonormal Krylov vectors of psi with the tridiagonal projection of H."""
    vectors = np.zeros((krylov_dim, psi.size), dtype=np.complex128)
    diagonal = np.zeros(krylov_dim)
    offdiagonal = np.zeros(krylov_dim)
    vectors[0] = psi
    size = krylov_dim
    residual_norm = 0.0
    for n in range(krylov_dim):
        w = H.matrix @ vectors[n]
        diagonal[n] = np.vdot(vectors[n], w).real
        w = w - diagonal[n] * vectors[n]
        if n > 0:
            w = w - offdiagonal[n - 1] * vectors[n - 1]
        w = w - vectors[: n + 1].T @ (vectors[: n + 1].conj() @ w)
        residual_norm = np.linalg.norm(w)
        if residual_norm < _BREAKDOWN:
            size = n + 1
            residual_norm = 0.0
            break
        if n + 1 < krylov_dim:
            offdiagonal[n] = residual_norm
            vectors[n + 1] = w / residual_norm
    return vectors[:size], diagonal[:size], offdiagonal[: size - 1], residual_norm


def _tridiagonal_eig(diagonal: np.ndarray, offdiagonal: np.ndarray):
    if diagonal.size == 1:
        return diagonal.copy(), np.ones((1, 1))
    return scipy.linalg.eigh_tridiagonal(diagonal, offdiagonal)


def evolve_krylov(
    H: SparseHamiltonian,
    psi0: np.ndarray,
    grid: TimeGrid,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
    substep_tol: float = DEFAULT_SUBSTEP_TOL,
    max_substeps: int = MAX_SUBSTEPS_PER_STEP,
) -> np.ndarray:
    """
    Lanczos short-iterate propagation across the grid.

    Each grid step of length dt is split into substeps; a substep of length
    tau is accepted when residual_norm * |(exp(-i T tau) e_0)_{m-1}| is below
    substep_tol, otherwise tau is halved. The state is re-normalized after
    every accepted substep.

    Raises:
        PropagationError: If a grid step needs more than max_substeps substeps
    """
    psi = _check_state(H, psi0).astype(np.complex128)
    krylov_dim = max(1, min(krylov_dim, H.dimension))
    states = np.empty((grid.times.size, H.dimension), dtype=np.complex128)
    states[0] = psi

    for k in range(1, grid.times.size):
        remaining = grid.dt
        tau = remaining
        substeps = 0
        while remaining > 1e-15:
            vectors, diagonal, offdiagonal, residual_norm = _lanczos_block(H, psi, krylov_dim)
            theta, rotation = _tridiagonal_eig(diagonal, offdiagonal)
            tau = min(tau, remaining)
            while True:
                substeps += 1
                if substeps > max_substeps:
                    raise PropagationError(
                        f"Krylov step {k} did not converge within {max_substeps} substeps"
                    )
                coefficients = rotation @ (np.exp(-1j * theta * tau) * rotation[0, :])
                error = residual_norm * abs(coefficients[-1])
                if error <= substep_tol:
                    break
                tau /= 2.0
            psi = coefficients @ vectors
            psi /= np.linalg.norm(psi)
            remaining -= tau
            tau *= 2.0
        states[k] = psi
    return states


def evolve(
    H: SparseHamiltonian,
    psi0: np.ndarray,
    grid: TimeGrid,
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
    substep_tol: float = DEFAULT_SUBSTEP_TOL,
    spectrum: Optional[SpectralData] = None,
) -> np.ndarray:
    """Dispatch to the exact or Krylov propagator."""
    if resolve_method(H, method, dense_limit) == "exact":
        return evolve_exact(H, psi0, grid, dense_limit, spectrum)
    return evolve_krylov(H, psi0, grid, krylov_dim, substep_tol)


def _clip_probabilities(values: np.ndarray) -> np.ndarray:
    values = np.clip(values, 0.0, 1.0)
    values[..., 0] = 1.0
    return values


def return_probability(
    H: SparseHamiltonian,
    alpha: int,
    grid: TimeGrid,
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
    substep_tol: float = DEFAULT_SUBSTEP_TOL,
    spectrum: Optional[SpectralData] = None,
) -> ReturnSeries:
    """
    L(t) = |<alpha|exp(-iHt)|alpha>|^2 for a Fock state alpha.

    Raises:
        StateNotInSectorError: If alpha is not in the sector
    """
    index = H.basis.index_of(alpha)
    if resolve_method(H, method, dense_limit) == "exact":
        if spectrum is None:
            spectrum = diagonalize(H, keep_vectors=True, dense_limit=dense_limit)
        values = batch_return_probabilities(spectrum, np.array([index]), grid)[0]
    else:
        psi0 = H.basis.basis_vector(alpha)
        try:
            states = evolve_krylov(H, psi0, grid, krylov_dim, substep_tol)
        except PropagationError as exc:
            raise PropagationError(str(exc), state=alpha) from exc
        values = _clip_probabilities(np.abs(states[:, index]) ** 2)
    return ReturnSeries(grid=grid, values=values, state=int(alpha))


def batch_return_probabilities(
    spectrum: SpectralData, indices: np.ndarray, grid: TimeGrid, batch_size: int = 256
) -> np.ndarray:
    """
    Return probabilities of several basis states from one eigen-decomposition.

    L_a(t) = |sum_n |<a|E_n>|^2 exp(-i E_n t)|^2.

    Returns:
        Array of shape (len(indices), len(grid.times))
    """
    phases = np.exp(-1j * np.outer(spectrum.eigenvalues, grid.times))
    out = np.empty((len(indices), grid.times.size))
    for start in range(0, len(indices), batch_size):
        chunk = np.asarray(indices[start:start + batch_size])
        weights = spectrum.eigenvectors[chunk, :] ** 2
        out[start:start + chunk.size] = np.abs(weights @ phases) ** 2
    return _clip_probabilities(out)


def site_density(
    H: SparseHamiltonian,
    psi0: np.ndarray,
    grid: TimeGrid,
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    krylov_dim: int = DEFAULT_KRYLOV_DIM,
    substep_tol: float = DEFAULT_SUBSTEP_TOL,
) -> DensityProfile:
    """n_i(t_k) = sum_a |psi_a(t_k)|^2 * bit_i(a)."""
    states = evolve(H, psi0, grid, method, dense_limit, krylov_dim, substep_tol)
    probabilities = np.abs(states) ** 2
    occupation = probabilities @ occupation_matrix(H.basis)
    return DensityProfile(grid=grid, occupation=np.clip(occupation, 0.0, 1.0))


def oscillation_contrast(profile: DensityProfile, window: float) -> np.ndarray:
    """
    Peak-to-peak occupation of each site over the window starting at each t_k.

    Rows whose window runs past the end of the grid are NaN.
    """
    samples = max(2, int(round(window / profile.grid.dt)) + 1)
    frame = pd.DataFrame(profile.occupation)
    rolling = frame.rolling(samples, min_periods=samples)
    spread = (rolling.max() - rolling.min()).shift(-(samples - 1))
    return spread.to_numpy()


def lightcone_times(
    profile: DensityProfile,
    window: float = 5.0,
    fraction: float = 0.5,
    horizon: float = 10.0,
    reference: Optional[DensityProfile] = None,
) -> np.ndarray:
    """
    First time each site's oscillation contrast falls below fraction of a baseline.

    The baseline is the site's own contrast at t=0, or, when a reference
    profile is given, the reference contrast at the same site and time.
    Comparing with the unperturbed chain cancels the slow contrast decay
    both chains share. Sites that keep their contrast up to the horizon
    get +inf.

    Raises:
        GridMismatchError: If the reference is on another grid or chain length
    """
    contrast = oscillation_contrast(profile, window)
    if reference is None:
        baseline = np.broadcast_to(contrast[0], contrast.shape)
    else:
        if reference.grid != profile.grid or reference.occupation.shape != profile.occupation.shape:
            raise GridMismatchError("reference density is on a different grid or chain")
        baseline = oscillation_contrast(reference, window)
    times = profile.grid.times
    lost = (times[:, None] <= horizon) & (contrast < fraction * baseline)
    result = np.full(contrast.shape[1], np.inf)
    for site in range(contrast.shape[1]):
        below = np.flatnonzero(lost[:, site])
        if below.size:
            result[site] = times[below[0]]
    return result


def chain_distance(site: int, origin: int, n_sites: int, periodic: bool = True) -> int:
    gap = abs(site - origin)
    return min(gap, n_sites - gap) if periodic else gap

