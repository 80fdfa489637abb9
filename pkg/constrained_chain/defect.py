"""
Single-defect experiment on the PXP chain.

One site's range is raised to q, and the clean and defected chains are
compared from the same initial state. The comparison covers return
probabilities, eigenstate overlaps, site densities, and the time at which
each site loses its oscillation contrast relative to the clean chain.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from constrained_chain.ensemble_config import (
    Boundary,
    DefectSpec,
    apply_defect,
    format_state,
    parse_state,
    pxp_profile,
)
from constrained_chain.fock_sector import sector_for
from constrained_chain.lls import LLSCriterion, classify_lls
from constrained_chain.propagator import (
    DensityProfile,
    TimeGrid,
    chain_distance,
    lightcone_times,
    resolve_method,
    return_probability,
    site_density,
)
from constrained_chain.spectral import diagonalize, overlaps
from constrained_chain.sweep import DEFAULT_DENSE_LIMIT

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DefectResult:
    returns: pd.DataFrame = field(repr=False)
    overlaps: pd.DataFrame = field(repr=False)
    density: DensityProfile = field(repr=False)
    lightcone: pd.DataFrame = field(repr=False)
    clean_is_lls: bool
    defect_is_lls: bool
    clean_dimension: int
    defect_dimension: int


def defect_experiment(
    n_sites: int = 12,
    site: Optional[int] = None,
    strength: int = 2,
    state: str = "z2",
    grid: TimeGrid = TimeGrid(18.0),
    boundary: Boundary = Boundary.PERIODIC,
    criterion: LLSCriterion = LLSCriterion(),
    method: str = "auto",
    dense_limit: int = DEFAULT_DENSE_LIMIT,
    window: float = 5.0,
    horizon: float = 10.0,
) -> DefectResult:
    """
    Compare PXP with and without a range-q defect at one site.

    Args:
        site: Defect site; the middle of the chain when omitted
        strength: Defect range q (q=1 reproduces the clean chain)
        state: Initial Fock state as 'z2', "z2'" or a bit string
        window: Window of the oscillation-contrast measure
        horizon: Latest time considered for the lightcone

    Raises:
        ProfileError: If the defect site or strength is invalid
        StateNotInSectorError: If the state is not reachable in either chain
    """
    site = n_sites // 2 if site is None else site
    alpha = parse_state(state, n_sites)
    clean = pxp_profile(n_sites, boundary)
    defected = apply_defect(clean, DefectSpec(site=site, strength=strength))
    logger.info(
        f"Defect experiment: N={n_sites}, q={strength} at site {site}, "
        f"state {format_state(alpha, n_sites)}"
    )

    models = {}
    for label, profile in (("clean", clean), ("defect", defected)):
        basis, H = sector_for(profile)
        spectrum = None
        if resolve_method(H, method, dense_limit) == "exact":
            spectrum = diagonalize(H, keep_vectors=True, dense_limit=dense_limit)
        series = return_probability(H, alpha, grid, method=method, dense_limit=dense_limit, spectrum=spectrum)
        models[label] = (basis, H, spectrum, series)

    returns = pd.DataFrame({
        "time": grid.times,
        "L_clean": models["clean"][3].values,
        "L_defect": models["defect"][3].values,
    })

    frames = []
    for label, (_, _, spectrum, _) in models.items():
        if spectrum is None:
            logger.warning(f"Skipping {label} overlaps: sector above the dense limit")
            continue
        frame = overlaps(spectrum, alpha)
        frame.insert(0, "model", label)
        frames.append(frame)
    overlap_frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["model", "energy", "overlap"]
    )

    densities = {
        label: site_density(H, H.basis.basis_vector(alpha), grid, method=method, dense_limit=dense_limit)
        for label, (_, H, _, _) in models.items()
    }
    density = densities["defect"]
    periodic = Boundary(boundary) == Boundary.PERIODIC
    lightcone = pd.DataFrame({
        "site": np.arange(n_sites),
        "distance": [chain_distance(i, site, n_sites, periodic) for i in range(n_sites)],
        "time": lightcone_times(density, window=window, horizon=horizon, reference=densities["clean"]),
    })

    clean_record = classify_lls(models["clean"][3], criterion)
    defect_record = classify_lls(models["defect"][3], criterion)
    logger.info(
        f"Upward crossings of {criterion.threshold}: clean {clean_record.crossings}, "
        f"defect {defect_record.crossings}"
    )
    return DefectResult(
        returns=returns,
        overlaps=overlap_frame,
        density=density,
        lightcone=lightcone,
        clean_is_lls=clean_record.qualifies,
        defect_is_lls=defect_record.qualifies,
        clean_dimension=models["clean"][0].dimension,
        defect_dimension=models["defect"][0].dimension,
    )
