"""
Constraint-range realisations for the randomly constrained spin chain.

Each site i carries a constraint range r_i: the spin can flip only when
every spin within distance r_i on both sides is down. Realisations draw
r_i uniformly from the integers around the mean range mu; the PXP model
is the mu=1, epsilon=0 member of the ensemble.

Draws are keyed by (seed, mu, realisation_index, site) through numpy's
SeedSequence spawn keys, so any realisation can be rebuilt in isolation
and parallel workers never share generator state.
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, List, Mapping, Tuple

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence

from constrained_chain.errors import ConfigError, ProfileError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1
DEFAULT_MIN_RANGE = 1
_SEED_MASK = (1 << 64) - 1
_MU_KEY_SCALE = 1_000_000


class Boundary(str, Enum):
    PERIODIC = "periodic"
    OPEN = "open"


@dataclass(frozen=True)
class ConstraintProfile:
    """
    One realisation of per-site constraint ranges.

    Attributes:
        n_sites: Number of spins N
        ranges: Constraint range r_i for each site
        mu: Mean range the realisation was drawn around
        epsilon: Half width of the integer draw interval
        min_range: Floor applied to every draw
        boundary: Periodic or open chain
        seed: Master seed of the draw stream
        realisation_index: Index of this realisation within the stream
    """

    n_sites: int
    ranges: Tuple[int, ...]
    mu: float
    epsilon: int
    min_range: int = DEFAULT_MIN_RANGE
    boundary: Boundary = Boundary.PERIODIC
    seed: int = 0
    realisation_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ranges", tuple(int(r) for r in self.ranges))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.n_sites < 2:
            raise ProfileError(f"n_sites must be at least 2, got {self.n_sites}")
        if len(self.ranges) != self.n_sites:
            raise ProfileError(
                f"expected {self.n_sites} ranges, got {len(self.ranges)}"
            )
        if self.min_range < 0:
            raise ProfileError(f"min_range must be non-negative, got {self.min_range}")
        below = [r for r in self.ranges if r < self.min_range]
        if below:
            raise ProfileError(
                f"ranges {below} fall below min_range={self.min_range}"
            )

    def to_json(self) -> dict:
        """Manifest form of the profile."""
        return {
            "n_sites": self.n_sites,
            "ranges": list(self.ranges),
            "mu": self.mu,
            "epsilon": self.epsilon,
            "min_range": self.min_range,
            "boundary": self.boundary.value,
            "seed": self.seed,
            "realisation_index": self.realisation_index,
        }


@dataclass(frozen=True)
class DefectSpec:
    """A single site whose range is replaced by strength q."""

    site: int
    strength: int

    def __post_init__(self):
        if self.site < 0:
            raise ProfileError(f"defect site must be non-negative, got {self.site}")
        if self.strength < 1:
            raise ProfileError(f"defect strength must be >= 1, got {self.strength}")


def profile_from_json(data: Mapping[str, Any]) -> ConstraintProfile:
    """Rebuild a profile from its manifest form."""
    return ConstraintProfile(
        n_sites=int(data["n_sites"]),
        ranges=tuple(int(r) for r in data["ranges"]),
        mu=float(data["mu"]),
        epsilon=int(data["epsilon"]),
        min_range=int(data["min_range"]),
        boundary=Boundary(data["boundary"]),
        seed=int(data["seed"]),
        realisation_index=int(data["realisation_index"]),
    )


def profile_checksum(profile: ConstraintProfile) -> str:
    """BLAKE2b-128 digest of the canonical JSON form of a profile."""
    canonical = json.dumps(profile.to_json(), sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode("utf-8"), digest_size=16).hexdigest()


def round_mu(mu: float) -> int:
    """Nearest integer to mu, halves rounded up."""
    return int(math.floor(mu + 0.5))


def mu_stream_key(mu: float) -> int:
    """Integer stream key of a mean range, resolved to 1e-6."""
    return int(round(float(mu) * _MU_KEY_SCALE))


def site_generator(seed: int, realisation_index: int, site: int, mu: float = 0.0) -> Generator:
    """Independent generator for one site of one realisation at mean range mu."""
    sequence = SeedSequence(
        entropy=int(seed) & _SEED_MASK,
        spawn_key=(mu_stream_key(mu), int(realisation_index), int(site)),
    )
    return Generator(PCG64(sequence))


def sample_constraints(
    mu: float,
    epsilon: int = DEFAULT_EPSILON,
    n_sites: int = 12,
    min_range: int = DEFAULT_MIN_RANGE,
    boundary: Boundary = Boundary.PERIODIC,
    seed: int = 0,
    realisation_index: int = 0,
) -> ConstraintProfile:
    """
    Draw one realisation of constraint ranges.

    Each r_i is uniform on the integers of [round(mu) - epsilon, round(mu) + epsilon],
    then clamped up to min_range.

    Args:
        mu: Mean constraint range (rounded to the nearest integer)
        epsilon: Half width of the draw interval
        n_sites: Chain length N
        min_range: Floor for every draw
        boundary: Boundary condition recorded in the profile
        seed: Master seed
        realisation_index: Realisation within the (seed, mu) stream

    Returns:
        The sampled ConstraintProfile

    Raises:
        ProfileError: If n_sites < 2, mu < 0 or epsilon < 0
    """
    if n_sites < 2:
        raise ProfileError(f"n_sites must be at least 2, got {n_sites}")
    if mu < 0:
        raise ProfileError(f"mu must be non-negative, got {mu}")
    if epsilon < 0:
        raise ProfileError(f"epsilon must be non-negative, got {epsilon}")

    center = round_mu(mu)
    low, high = center - epsilon, center + epsilon
    ranges = []
    for site in range(n_sites):
        draw = int(site_generator(seed, realisation_index, site, mu).integers(low, high + 1))
        ranges.append(max(draw, min_range))

    return ConstraintProfile(
        n_sites=n_sites,
        ranges=tuple(ranges),
        mu=float(mu),
        epsilon=int(epsilon),
        min_range=int(min_range),
        boundary=Boundary(boundary),
        seed=int(seed),
        realisation_index=int(realisation_index),
    )


def has_lattice_symmetry(profile: ConstraintProfile) -> bool:
    """
    True if a reflection, or on a ring a nontrivial translation, maps the
    ranges onto themselves. The sector of such a profile splits into
    independent parity or momentum blocks.
    """
    r, n = profile.ranges, profile.n_sites
    if profile.boundary == Boundary.OPEN:
        return r == r[::-1]
    for shift in range(n):
        if all(r[(shift - i) % n] == r[i] for i in range(n)):
            return True
        if shift and all(r[(i + shift) % n] == r[i] for i in range(n)):
            return True
    return False


def pxp_profile(n_sites: int, boundary: Boundary = Boundary.PERIODIC) -> ConstraintProfile:
    """The PXP chain: every site constrained by its nearest neighbours."""
    if n_sites < 2:
        raise ProfileError(f"n_sites must be at least 2, got {n_sites}")
    return ConstraintProfile(
        n_sites=n_sites,
        ranges=(1,) * n_sites,
        mu=1.0,
        epsilon=0,
        min_range=DEFAULT_MIN_RANGE,
        boundary=Boundary(boundary),
    )


def apply_defect(profile: ConstraintProfile, defect: DefectSpec) -> ConstraintProfile:
    """
    Replace the range at one site.

    Raises:
        ProfileError: If the site is outside the chain or q is below min_range
    """
    if defect.site >= profile.n_sites:
        raise ProfileError(
            f"defect site {defect.site} outside chain of {profile.n_sites} sites"
        )
    ranges = list(profile.ranges)
    ranges[defect.site] = defect.strength
    return replace(profile, ranges=tuple(ranges))


def neel_state(n_sites: int, phase: int = 0) -> int:
    """Z2 product state with up spins on even (phase 0) or odd (phase 1) sites."""
    return sum(1 << i for i in range(phase % 2, n_sites, 2))


def parse_state(text: str, n_sites: int) -> int:
    """
    Parse a Fock state given as 'z2', "z2'" or a bit string.

    Bit strings list site 0 first, so '1010' has spins 0 and 2 up.
    """
    token = text.strip().lower()
    if token == "z2":
        return neel_state(n_sites, 0)
    if token in ("z2'", "z2p", "z2-prime"):
        return neel_state(n_sites, 1)
    if len(token) != n_sites or set(token) - {"0", "1"}:
        raise ConfigError([f"state={text!r} is not z2, z2' or a {n_sites}-bit string"])
    return sum(1 << i for i, ch in enumerate(token) if ch == "1")


def format_state(state: int, n_sites: int) -> str:
    """Bit string of a Fock state, site 0 first."""
    return "".join("1" if (state >> i) & 1 else "0" for i in range(n_sites))


def mu_grid(grid_text: str, n_sites: int) -> List[Tuple[float, float]]:
    """
    Expand a 'start:stop:step' mu/N sweep into (mu/N, mu) pairs.

    The stop value is inclusive within half a step. A bare number is a
    single-point sweep.
    """
    if ":" not in grid_text:
        grid_text = f"{grid_text}:{grid_text}:1"
    try:
        start, stop, step = (float(part) for part in grid_text.split(":"))
    except ValueError:
        raise ConfigError([f"mu_over_n={grid_text!r} is not start:stop:step"])
    if step <= 0 or stop < start:
        raise ConfigError([f"mu_over_n={grid_text!r} needs step > 0 and stop >= start"])

    count = int(math.floor((stop - start) / step + 0.5)) + 1
    points = []
    for k in range(count):
        fraction = round(start + k * step, 12)
        points.append((fraction, round(fraction * n_sites, 12)))
    logger.debug(f"mu grid {grid_text} at N={n_sites}: {len(points)} points")
    return points
