"""Shared fixtures: small sectors with known structure."""
import numpy as np
import pytest
import scipy.sparse as sp

from constrained_chain.ensemble_config import ConstraintProfile, neel_state, pxp_profile
from constrained_chain.fock_sector import SectorBasis, SparseHamiltonian, sector_for


def free_profile(n_sites: int) -> ConstraintProfile:
    """No constraints at all: every spin flips freely."""
    return ConstraintProfile(n_sites, (0,) * n_sites, mu=0.0, epsilon=0, min_range=0)


def tiny_sector(dimension: int) -> SparseHamiltonian:
    """Hand-built sector of one state, or two states joined by one flip."""
    states = np.arange(dimension, dtype=np.int64)
    basis = SectorBasis(n_sites=2, states=states)
    if dimension == 1:
        matrix = sp.csr_matrix((1, 1))
    else:
        matrix = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    return SparseHamiltonian(basis=basis, matrix=matrix)


@pytest.fixture(scope="session")
def pxp12():
    basis, H = sector_for(pxp_profile(12))
    return basis, H


@pytest.fixture(scope="session")
def z2_12():
    return neel_state(12)


@pytest.fixture
def single_state_sector():
    return tiny_sector(1)


@pytest.fixture
def two_state_sector():
    return tiny_sector(2)
