import numpy as np
import pytest
from numpy.random import PCG64, Generator, SeedSequence
from numpy.testing import assert_allclose

from constrained_chain.ensemble_config import mu_grid, sample_constraints
from constrained_chain.errors import DimensionError, InsufficientLevelsError, MissingEigenvectorsError
from constrained_chain.fock_sector import sector_for
from constrained_chain.spectral import (
    GOE_MEAN_RATIO,
    POISSON_MEAN_RATIO,
    collapse_degenerate,
    diagonalize,
    ensemble_level_stats,
    overlaps,
    sample_goe_levels,
    sample_poisson_levels,
    spacing_ratios,
)
from constrained_chain.sweep import SweepSettings


@pytest.fixture
def rng():
    return Generator(PCG64(SeedSequence(11)))


@pytest.mark.parametrize("index", range(3))
def test_spectrum_is_symmetric_about_zero(index):
    _, H = sector_for(sample_constraints(mu=2.0, n_sites=10, seed=4, realisation_index=index))
    levels = np.sort(diagonalize(H, keep_vectors=False).eigenvalues)
    assert_allclose(levels + levels[::-1], 0.0, atol=1e-9)


def test_eigenvectors_follow_the_sign_convention(pxp12):
    _, H = pxp12
    spectrum = diagonalize(H)
    vectors = spectrum.eigenvectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    assert np.all(vectors[pivots, np.arange(vectors.shape[1])] > 0)
    assert_allclose(H.to_dense() @ vectors, vectors * spectrum.eigenvalues, atol=1e-9)


def test_dense_limit(pxp12):
    _, H = pxp12
    with pytest.raises(DimensionError):
        diagonalize(H, dense_limit=100)


def test_overlaps_sum_to_one(pxp12, z2_12):
    _, H = pxp12
    frame = overlaps(diagonalize(H), z2_12)
    assert list(frame.columns) == ["energy", "overlap"]
    assert len(frame) == 322
    assert frame["overlap"].sum() == pytest.approx(1.0)
    assert frame["energy"].is_monotonic_increasing


def test_overlaps_need_eigenvectors(pxp12, z2_12):
    _, H = pxp12
    with pytest.raises(MissingEigenvectorsError):
        overlaps(diagonalize(H, keep_vectors=False), z2_12)


def test_equally_spaced_levels():
    stats = spacing_ratios([3.0, 0.0, 2.0, 1.0])
    assert_allclose(stats.ratios, [1.0, 1.0])
    assert stats.mean == 1.0
    assert stats.n_levels_used == 4


def test_ratio_of_unequal_gaps():
    assert spacing_ratios([0.0, 1.0, 3.0]).mean == pytest.approx(0.5)


def test_degenerate_levels_are_collapsed():
    stats = spacing_ratios([0.0, 1e-12, 1.0, 2.0, 3.0])
    assert stats.n_collapsed == 1
    assert stats.mean == 1.0
    assert collapse_degenerate([1.0, 0.0, 1.0 + 1e-10], 1e-8).tolist() == [0.0, 1.0]


@pytest.mark.parametrize("levels", [[0.0, 1.0], [0.0, 0.0, 0.0, 1.0], []])
def test_too_few_levels(levels):
    with pytest.raises(InsufficientLevelsError):
        spacing_ratios(levels)


def test_central_fraction_trims_both_edges():
    levels = np.arange(12.0) ** 2
    stats = spacing_ratios(levels, central_fraction=0.5)
    assert stats.n_levels_used == 6
    full = spacing_ratios(levels)
    assert stats.ratios.size == 4 and full.ratios.size == 10


def test_poisson_mean_ratio(rng):
    mean = spacing_ratios(sample_poisson_levels(20_000, rng)).mean
    assert mean == pytest.approx(POISSON_MEAN_RATIO, abs=0.01)


def test_goe_mean_ratio(rng):
    ratios = np.concatenate([
        spacing_ratios(sample_goe_levels(1000, rng), central_fraction=0.5).ratios
        for _ in range(6)
    ])
    assert ratios.mean() == pytest.approx(GOE_MEAN_RATIO, abs=0.02)


def test_ensemble_level_stats():
    [point] = ensemble_level_stats([(0.25, 2.0)], 8, 3)
    assert point.realisations + point.skipped + point.symmetric == 3
    assert point.n_sites == 8 and point.mu == 2.0
    if point.realisations:
        assert 0.0 < point.mean_r <= 1.0


def test_symmetric_profiles_are_left_out():
    # epsilon=0 gives uniform ranges, symmetric under every lattice map
    [point] = ensemble_level_stats([(0.125, 1.0)], 8, 2, SweepSettings(epsilon=0))
    assert point.symmetric == 2
    assert point.realisations == 0 and point.skipped == 0


def test_oversized_sectors_are_skipped():
    [point] = ensemble_level_stats([(0.25, 2.0)], 8, 2, SweepSettings(dense_limit=1))
    assert point.skipped == 2
    assert point.realisations == 0
    assert np.isnan(point.mean_r)


@pytest.mark.slow
def test_model_sectors_have_goe_statistics():
    points = ensemble_level_stats(
        mu_grid("0.1:0.2:0.05", 14), 14, 50, SweepSettings(workers=4), central_fraction=0.5
    )
    for point in points:
        assert 0.51 <= point.mean_r <= 0.55
