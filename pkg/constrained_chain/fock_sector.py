"""
Fock-space sector construction for the constrained chain.

Fock states are bitmasks: bit i set means spin i is up (non-facilitating).
A site may flip when every spin within its constraint range is down, which
reduces to a single AND against a precomputed blocker mask. The sector is
the connected component of the fully facilitating state |00...0>, found by
breadth-first search, and the Hamiltonian is the adjacency matrix of that
component stored as a scipy CSR matrix.
"""
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from constrained_chain.ensemble_config import Boundary, ConstraintProfile, profile_checksum
from constrained_chain.errors import (
    DimensionError,
    ExhaustiveLimitError,
    ProfileError,
    ProfileMismatchError,
    SectorCapacityError,
    StateNotInSectorError,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_DIMENSION = 2_000_000
DEFAULT_EXHAUSTIVE_LIMIT = 20
MAX_BITS = 62
ROOT_STATE = 0

_CACHE_MAGIC = b"CSECTOR1"


def blocker_masks(profile: ConstraintProfile) -> List[int]:
    """
    Bitmask of the sites that must be down for each site to flip.

    Periodic chains wrap indices mod N and never list a site as its own
    blocker; open chains ignore positions beyond the ends.
    """
    n = profile.n_sites
    masks = []
    for i, reach in enumerate(profile.ranges):
        mask = 0
        for j in range(1, reach + 1):
            for pos in (i - j, i + j):
                if profile.boundary is Boundary.PERIODIC:
                    pos %= n
                elif not 0 <= pos < n:
                    continue
                if pos != i:
                    mask |= 1 << pos
        masks.append(mask)
    return masks


def allowed_flips(state: int, profile: ConstraintProfile) -> FrozenSet[int]:
    """Sites whose constraint neighbourhood is fully facilitating in `state`."""
    return frozenset(
        i for i, mask in enumerate(blocker_masks(profile)) if state & mask == 0
    )


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """
    Sorted bitmasks of one connected sector.

    Attributes:
        n_sites: Chain length the states are defined on
        states: Ascending int64 bitmasks
        profile_checksum: Checksum of the profile the sector was built from
    """

    n_sites: int
    states: np.ndarray = field(repr=False)
    profile_checksum: str = ""

    @property
    def dimension(self) -> int:
        return int(self.states.size)

    @cached_property
    def index(self) -> Dict[int, int]:
        """Map from bitmask to basis position."""
        return {int(s): k for k, s in enumerate(self.states)}

    def __contains__(self, state) -> bool:
        pos = np.searchsorted(self.states, state)
        return bool(pos < self.states.size and self.states[pos] == state)

    def index_of(self, state: int) -> int:
        """Basis position of a single state."""
        pos = int(np.searchsorted(self.states, state))
        if pos >= self.states.size or self.states[pos] != state:
            raise StateNotInSectorError(state)
        return pos

    def indices_of(self, states: np.ndarray) -> np.ndarray:
        """Vectorised basis positions; every state must be a member."""
        states = np.asarray(states, dtype=np.int64)
        pos = np.searchsorted(self.states, states)
        pos_clipped = np.minimum(pos, self.states.size - 1)
        missing = self.states[pos_clipped] != states
        if np.any(missing):
            raise StateNotInSectorError(int(states[np.argmax(missing)]))
        return pos

    def basis_vector(self, state: int) -> np.ndarray:
        """Unit vector on one Fock state."""
        vec = np.zeros(self.dimension)
        vec[self.index_of(state)] = 1.0
        return vec


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """
    Adjacency matrix of a sector graph; every nonzero element is 1.

    Immutable once built, so one instance can be shared read-only by any
    number of concurrent evolutions.
    """

    basis: SectorBasis
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    def neighbors(self, i: int) -> np.ndarray:
        """Sorted basis indices adjacent to basis index i."""
        start, stop = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return self.matrix.indices[start:stop]

    def degree(self, i: int) -> int:
        return int(self.matrix.indptr[i + 1] - self.matrix.indptr[i])

    def edge_count(self) -> int:
        """Number of undirected edges."""
        return int(self.matrix.nnz // 2)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _check_bits(profile: ConstraintProfile) -> None:
    if profile.n_sites > MAX_BITS:
        raise ProfileError(
            f"n_sites={profile.n_sites} exceeds the {MAX_BITS}-bit state encoding"
        )


def build_sector(
    profile: ConstraintProfile, max_dimension: int = DEFAULT_MAX_DIMENSION
) -> SectorBasis:
    """
    Breadth-first search of the sector containing the fully facilitating state.

    Each BFS layer is expanded for all sites at once with numpy: a frontier
    state can flip site i when (state & mask_i) == 0.

    Args:
        profile: Constraint profile defining the allowed flips
        max_dimension: Abort threshold on the sector size

    Returns:
        SectorBasis with ascending bitmasks

    Raises:
        SectorCapacityError: If the sector grows beyond max_dimension
    """
    _check_bits(profile)
    masks = np.array(blocker_masks(profile), dtype=np.int64)
    bits = np.left_shift(np.int64(1), np.arange(profile.n_sites, dtype=np.int64))

    visited = np.array([ROOT_STATE], dtype=np.int64)
    frontier = visited
    layers = 0
    while frontier.size:
        reached = [
            frontier[(frontier & masks[i]) == 0] ^ bits[i]
            for i in range(profile.n_sites)
        ]
        candidates = np.unique(np.concatenate(reached))
        fresh = candidates[~np.isin(candidates, visited, assume_unique=True)]
        if visited.size + fresh.size > max_dimension:
            raise SectorCapacityError(
                f"sector exceeds max_dimension={max_dimension} "
                f"(reached {visited.size + fresh.size} states after {layers} layers)"
            )
        visited = np.union1d(visited, fresh)
        frontier = fresh
        layers += 1

    logger.debug(
        f"Sector for N={profile.n_sites}: D_H={visited.size} after {layers} BFS layers"
    )
    return SectorBasis(
        n_sites=profile.n_sites,
        states=visited,
        profile_checksum=profile_checksum(profile),
    )


def build_hamiltonian(basis: SectorBasis, profile: ConstraintProfile) -> SparseHamiltonian:
    """
    Adjacency matrix of the sector: a -> a XOR (1 << i) for every allowed i.

    Raises:
        ProfileMismatchError: If the basis came from another profile or is
            not closed under the profile's flips
    """
    checksum = profile_checksum(profile)
    if basis.profile_checksum and basis.profile_checksum != checksum:
        raise ProfileMismatchError(
            f"basis checksum {basis.profile_checksum} does not match profile {checksum}"
        )
    if basis.n_sites != profile.n_sites:
        raise ProfileMismatchError(
            f"basis has {basis.n_sites} sites, profile has {profile.n_sites}"
        )

    states = basis.states
    masks = blocker_masks(profile)
    rows, cols = [], []
    positions = np.arange(basis.dimension, dtype=np.int64)
    for i, mask in enumerate(masks):
        movable = (states & np.int64(mask)) == 0
        targets = states[movable] ^ np.int64(1 << i)
        target_pos = np.searchsorted(states, targets)
        clipped = np.minimum(target_pos, basis.dimension - 1)
        if np.any(states[clipped] != targets):
            raise ProfileMismatchError(
                f"basis is not closed under flips of site {i}; wrong profile?"
            )
        rows.append(positions[movable])
        cols.append(target_pos)

    row = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    col = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    data = np.ones(row.size, dtype=np.float64)
    matrix = sp.csr_matrix((data, (row, col)), shape=(basis.dimension, basis.dimension))
    matrix.sort_indices()

    if (matrix != matrix.T).nnz:
        raise ProfileMismatchError("sector Hamiltonian is not symmetric")

    logger.debug(f"Hamiltonian D_H={basis.dimension}, edges={matrix.nnz // 2}")
    return SparseHamiltonian(basis=basis, matrix=matrix)


def apply_hamiltonian(H: SparseHamiltonian, v: np.ndarray) -> np.ndarray:
    """(Hv)_a = sum of v_b over the neighbours b of a."""
    v = np.asarray(v)
    if v.shape[0] != H.dimension:
        raise DimensionError(f"vector of length {v.shape[0]} for D_H={H.dimension}")
    return H.matrix @ v


def occupation_matrix(basis: SectorBasis) -> np.ndarray:
    """D_H x N matrix of up-spin indicators."""
    shifts = np.arange(basis.n_sites, dtype=np.int64)
    return ((basis.states[:, None] >> shifts[None, :]) & 1).astype(np.float64)


class UnionFind:
    """
    Array-backed disjoint-set forest over the integers 0..size-1.

    Union by size with path halving.
    """

    def __init__(self, size: int):
        self._parents = list(range(size))
        self._sizes = [1] * size

    def find(self, a: int) -> int:
        parents = self._parents
        while parents[a] != a:
            parents[a] = parents[parents[a]]
            a = parents[a]
        return a

    def union(self, a: int, b: int) -> None:
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return
        if self._sizes[root_a] < self._sizes[root_b]:
            root_a, root_b = root_b, root_a
        self._parents[root_b] = root_a
        self._sizes[root_a] += self._sizes[root_b]

    def size_of(self, a: int) -> int:
        return self._sizes[self.find(a)]

    def component_sizes(self) -> List[int]:
        return sorted(
            (self._sizes[i] for i, p in enumerate(self._parents) if p == i),
            reverse=True,
        )


def _exhaustive_union_find(profile: ConstraintProfile, exhaustive_limit: int) -> UnionFind:
    _check_bits(profile)
    if profile.n_sites > exhaustive_limit:
        raise ExhaustiveLimitError(
            f"n_sites={profile.n_sites} exceeds exhaustive limit {exhaustive_limit}"
        )
    everything = np.arange(1 << profile.n_sites, dtype=np.int64)
    forest = UnionFind(everything.size)
    for i, mask in enumerate(blocker_masks(profile)):
        bit = np.int64(1 << i)
        # each undirected edge once, from the down side of site i
        lower = everything[((everything & np.int64(mask)) == 0) & ((everything & bit) == 0)]
        for a, b in zip(lower.tolist(), (lower | bit).tolist()):
            forest.union(a, b)
    return forest


def all_components(
    profile: ConstraintProfile, exhaustive_limit: int = DEFAULT_EXHAUSTIVE_LIMIT
) -> List[int]:
    """
    Sizes of every connected component of the full 2^N Fock graph, descending.

    Raises:
        ExhaustiveLimitError: If N is above exhaustive_limit
    """
    return _exhaustive_union_find(profile, exhaustive_limit).component_sizes()


def root_component_size(
    profile: ConstraintProfile, exhaustive_limit: int = DEFAULT_EXHAUSTIVE_LIMIT
) -> int:
    """Size of the component holding |00...0>, by exhaustive union-find."""
    return _exhaustive_union_find(profile, exhaustive_limit).size_of(ROOT_STATE)


def save_sector(path: str, basis: SectorBasis, H: SparseHamiltonian) -> str:
    """
    Write a sector and its neighbour arrays to a binary file.

    Layout: magic, little-endian uint64 (N, D_H, nnz), 16-byte profile
    checksum, uint64 bitmasks, uint64 CSR indptr, uint32 CSR indices.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    header = np.array([basis.n_sites, basis.dimension, H.matrix.nnz], dtype="<u8")
    with open(path, "wb") as handle:
        handle.write(_CACHE_MAGIC)
        handle.write(header.tobytes())
        handle.write(bytes.fromhex(basis.profile_checksum))
        handle.write(basis.states.astype("<u8").tobytes())
        handle.write(H.matrix.indptr.astype("<u8").tobytes())
        handle.write(H.matrix.indices.astype("<u4").tobytes())
    logger.info(f"Saved sector D_H={basis.dimension} to {path}")
    return path


def load_sector(path: str, profile: ConstraintProfile) -> Tuple[SectorBasis, SparseHamiltonian]:
    """
    Read a sector written by save_sector and verify it against the profile.

    Raises:
        ProfileMismatchError: If the stored checksum or header does not match
    """
    with open(path, "rb") as handle:
        payload = handle.read()
    if payload[:8] != _CACHE_MAGIC:
        raise ProfileMismatchError(f"{path} is not a sector cache file")
    n_sites, dimension, nnz = (int(x) for x in np.frombuffer(payload, "<u8", 3, 8))
    offset = 8 + 24
    checksum = payload[offset:offset + 16].hex()
    offset += 16
    if checksum != profile_checksum(profile) or n_sites != profile.n_sites:
        raise ProfileMismatchError(f"{path} was built from a different profile")

    states = np.frombuffer(payload, "<u8", dimension, offset).astype(np.int64)
    offset += 8 * dimension
    indptr = np.frombuffer(payload, "<u8", dimension + 1, offset).astype(np.int64)
    offset += 8 * (dimension + 1)
    indices = np.frombuffer(payload, "<u4", nnz, offset).astype(np.int32)

    basis = SectorBasis(n_sites=n_sites, states=states, profile_checksum=checksum)
    matrix = sp.csr_matrix(
        (np.ones(nnz, dtype=np.float64), indices, indptr), shape=(dimension, dimension)
    )
    return basis, SparseHamiltonian(basis=basis, matrix=matrix)


class SectorCache:
    """On-disk sector cache keyed by profile checksum."""

    def __init__(self, directory: str, max_dimension: int = DEFAULT_MAX_DIMENSION):
        self.directory = directory
        self.max_dimension = max_dimension

    def path_for(self, profile: ConstraintProfile) -> str:
        return os.path.join(self.directory, f"{profile_checksum(profile)}.sector")

    def get_or_build(self, profile: ConstraintProfile) -> Tuple[SectorBasis, SparseHamiltonian]:
        path = self.path_for(profile)
        if os.path.exists(path):
            logger.debug(f"Sector cache hit {path}")
            return load_sector(path, profile)
        basis = build_sector(profile, self.max_dimension)
        H = build_hamiltonian(basis, profile)
        save_sector(path, basis, H)
        return basis, H


def sector_for(
    profile: ConstraintProfile,
    max_dimension: int = DEFAULT_MAX_DIMENSION,
    cache: Optional[SectorCache] = None,
) -> Tuple[SectorBasis, SparseHamiltonian]:
    """Basis and Hamiltonian for a profile, through the cache when one is given."""
    if cache is not None:
        return cache.get_or_build(profile)
    basis = build_sector(profile, max_dimension)
    return basis, build_hamiltonian(basis, profile)
