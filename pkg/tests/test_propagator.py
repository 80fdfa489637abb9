import numpy as np
import pytest
from numpy.testing import assert_allclose

from constrained_chain.ensemble_config import pxp_profile, sample_constraints
from constrained_chain.errors import DimensionError, GridMismatchError, PropagationError, StateNotInSectorError
from constrained_chain.fock_sector import SparseHamiltonian, sector_for
from constrained_chain.propagator import (
    DensityProfile,
    TimeGrid,
    batch_return_probabilities,
    chain_distance,
    default_t_max,
    evolve_exact,
    evolve_krylov,
    lightcone_times,
    oscillation_contrast,
    return_probability,
    site_density,
)
from constrained_chain.spectral import diagonalize
from tests.conftest import free_profile


def test_time_grid():
    grid = TimeGrid(18.0, 0.05)
    assert grid.n_steps == 360
    assert grid.times.size == 361
    assert grid.times[-1] == pytest.approx(18.0)
    assert TimeGrid(0.0, 0.05).times.tolist() == [0.0]


@pytest.mark.parametrize("t_max,dt", [(1.0, 0.0), (1.0, -0.1), (0.01, 0.05), (-1.0, 0.05)])
def test_invalid_time_grids(t_max, dt):
    with pytest.raises(DimensionError):
        TimeGrid(t_max, dt)


def test_default_horizon():
    assert default_t_max(12) == 18.0
    assert default_t_max(20) == 18.0
    assert default_t_max(24) == 50.0


@pytest.mark.parametrize("n", [2, 4, 8])
@pytest.mark.parametrize("method", ["exact", "krylov"])
def test_free_spins_return_as_cos_power(n, method):
    _, H = sector_for(free_profile(n))
    grid = TimeGrid(5.0, 0.05)
    series = return_probability(H, 0, grid, method=method)
    assert_allclose(series.values, np.cos(grid.times) ** (2 * n), atol=1e-10)


def test_exact_and_krylov_agree_on_pxp(pxp12, z2_12):
    _, H = pxp12
    grid = TimeGrid(18.0, 0.05)
    exact = return_probability(H, z2_12, grid, method="exact")
    krylov = return_probability(H, z2_12, grid, method="krylov")
    assert_allclose(exact.values, krylov.values, atol=1e-8)


@pytest.mark.parametrize("index", range(3))
def test_exact_and_krylov_agree_on_random_profiles(index):
    basis, H = sector_for(sample_constraints(mu=2.5, n_sites=11, seed=9, realisation_index=index))
    alpha = int(basis.states[-1])
    grid = TimeGrid(10.0, 0.05)
    assert_allclose(
        return_probability(H, alpha, grid, method="exact").values,
        return_probability(H, alpha, grid, method="krylov").values,
        atol=1e-8,
    )


@pytest.mark.parametrize("method", ["exact", "krylov"])
def test_reversing_h_leaves_the_return_probability_unchanged(method):
    basis, H = sector_for(sample_constraints(mu=2.0, n_sites=10, seed=2, realisation_index=1))
    reversed_H = SparseHamiltonian(basis, -H.matrix)
    alpha = int(basis.states[basis.dimension // 2])
    grid = TimeGrid(18.0)
    forward = return_probability(H, alpha, grid, method=method)
    backward = return_probability(reversed_H, alpha, grid, method=method)
    assert_allclose(forward.values, backward.values, atol=1e-10)


def test_return_probability_bounds(pxp12, z2_12):
    _, H = pxp12
    series = return_probability(H, z2_12, TimeGrid(18.0))
    assert series.values[0] == 1.0
    assert series.values.min() >= 0.0 and series.values.max() <= 1.0
    assert series.state == z2_12


def test_single_state_sector_never_decays(single_state_sector):
    grid = TimeGrid(3.0, 0.1)
    for method in ("exact", "krylov"):
        series = return_probability(single_state_sector, 0, grid, method=method)
        assert_allclose(series.values, 1.0)


def test_two_state_sector_oscillates(two_state_sector):
    grid = TimeGrid(6.0, 0.05)
    for method in ("exact", "krylov"):
        series = return_probability(two_state_sector, 0, grid, method=method)
        assert_allclose(series.values, np.cos(grid.times) ** 2, atol=1e-10)


def test_krylov_with_zero_horizon_returns_initial_state(pxp12, z2_12):
    basis, H = pxp12
    psi0 = basis.basis_vector(z2_12)
    states = evolve_krylov(H, psi0, TimeGrid(0.0))
    assert states.shape == (1, basis.dimension)
    assert_allclose(states[0], psi0)


def test_evolution_preserves_norm(pxp12, z2_12):
    basis, H = pxp12
    states = evolve_exact(H, basis.basis_vector(z2_12), TimeGrid(5.0))
    assert_allclose(np.linalg.norm(states, axis=1), 1.0, atol=1e-10)


def test_input_state_checks(pxp12):
    basis, H = pxp12
    with pytest.raises(DimensionError):
        evolve_exact(H, np.ones(basis.dimension), TimeGrid(1.0))
    with pytest.raises(DimensionError):
        evolve_krylov(H, np.ones(3) / np.sqrt(3), TimeGrid(1.0))
    with pytest.raises(StateNotInSectorError):
        return_probability(H, 0b11, TimeGrid(1.0))
    with pytest.raises(DimensionError):
        return_probability(H, 0, TimeGrid(1.0), method="magic")


def test_krylov_substep_budget_is_enforced():
    basis, H = sector_for(pxp_profile(8))
    with pytest.raises(PropagationError):
        evolve_krylov(H, basis.basis_vector(0), TimeGrid(0.5), krylov_dim=2,
                      substep_tol=1e-300, max_substeps=3)


def test_dense_limit_applies_to_exact(pxp12, z2_12):
    _, H = pxp12
    with pytest.raises(DimensionError):
        return_probability(H, z2_12, TimeGrid(1.0), method="exact", dense_limit=100)


def test_batch_matches_single_state_calls(pxp12):
    basis, H = pxp12
    spectrum = diagonalize(H)
    grid = TimeGrid(8.0)
    indices = np.array([0, 5, 17, basis.dimension - 1])
    batch = batch_return_probabilities(spectrum, indices, grid, batch_size=3)
    for row, k in zip(batch, indices):
        single = return_probability(H, int(basis.states[k]), grid, spectrum=spectrum)
        assert_allclose(row, single.values, atol=1e-12)


def test_free_spin_density_follows_sin_squared():
    basis, H = sector_for(free_profile(3))
    grid = TimeGrid(4.0)
    profile = site_density(H, basis.basis_vector(0), grid)
    assert profile.occupation.shape == (grid.times.size, 3)
    for site in range(3):
        assert_allclose(profile.occupation[:, site], np.sin(grid.times) ** 2, atol=1e-10)


def test_density_starts_from_the_initial_bits(pxp12, z2_12):
    basis, H = pxp12
    profile = site_density(H, basis.basis_vector(z2_12), TimeGrid(2.0))
    assert_allclose(profile.occupation[0], [1, 0] * 6, atol=1e-12)
    frame = profile.to_frame()
    assert list(frame["site"]) == list(range(12))


def test_oscillation_contrast_window(pxp12, z2_12):
    basis, H = pxp12
    profile = site_density(H, basis.basis_vector(z2_12), TimeGrid(10.0))
    contrast = oscillation_contrast(profile, window=3.0)
    assert contrast.shape == profile.occupation.shape
    assert np.all(np.isnan(contrast[-1]))
    assert np.all(contrast[0] > 0.5)


def _fading_oscillation(grid):
    occupation = np.array([0.0, 1.0, 0.0, 1.0, 0.35, 0.65, 0.35, 0.65, 0.35])
    steady = np.tile([0.0, 1.0], 5)[:9]
    return DensityProfile(grid, np.column_stack([occupation, steady]))


def test_lightcone_against_the_initial_contrast():
    grid = TimeGrid(4.0, 0.5)
    times = lightcone_times(_fading_oscillation(grid), window=0.5)
    assert times[0] == 2.0
    assert np.isinf(times[1])
    assert np.isinf(lightcone_times(_fading_oscillation(grid), window=0.5, horizon=1.5)[0])


def test_lightcone_ignores_decay_shared_with_the_reference():
    grid = TimeGrid(4.0, 0.5)
    profile = _fading_oscillation(grid)
    assert np.all(np.isinf(lightcone_times(profile, window=0.5, reference=profile)))
    steady = DensityProfile(grid, np.column_stack([profile.occupation[:, 1]] * 2))
    assert lightcone_times(profile, window=0.5, reference=steady)[0] == 2.0


def test_lightcone_reference_must_share_the_grid():
    profile = _fading_oscillation(TimeGrid(4.0, 0.5))
    other = DensityProfile(TimeGrid(8.0, 1.0), profile.occupation)
    with pytest.raises(GridMismatchError):
        lightcone_times(profile, reference=other)


def test_chain_distance():
    assert chain_distance(11, 1, 12, periodic=True) == 2
    assert chain_distance(11, 1, 12, periodic=False) == 10
