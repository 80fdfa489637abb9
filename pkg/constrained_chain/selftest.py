"""
Analytic-oracle suite run by `run_chain selftest`.

Each check compares the library against a result known in closed form or
obtained independently (brute-force union-find, a second propagator).
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd
from numpy.random import PCG64, Generator, SeedSequence

from constrained_chain.ensemble_config import (
    ConstraintProfile,
    neel_state,
    pxp_profile,
    sample_constraints,
)
from constrained_chain.errors import SelftestFailure
from constrained_chain.fock_sector import build_sector, root_component_size, sector_for
from constrained_chain.propagator import TimeGrid, return_probability
from constrained_chain.spectral import (
    GOE_MEAN_RATIO,
    POISSON_MEAN_RATIO,
    diagonalize,
    sample_goe_levels,
    sample_poisson_levels,
    spacing_ratios,
)
from constrained_chain.tli import cost, lanczos_extend, tli_return

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _free_profile(n_sites: int) -> ConstraintProfile:
    return ConstraintProfile(n_sites, (0,) * n_sites, mu=0.0, epsilon=0, min_range=0)


def check_pxp_dimensions() -> Tuple[bool, str]:
    dims = {n: build_sector(pxp_profile(n)).dimension for n in (4, 6, 12)}
    return dims == {4: 7, 6: 18, 12: 322}, f"D_H by N: {dims}"


def check_free_spin_return() -> Tuple[bool, str]:
    grid = TimeGrid(5.0, 0.05)
    worst = 0.0
    for n in (2, 4, 8):
        _, H = sector_for(_free_profile(n))
        series = return_probability(H, 0, grid)
        worst = max(worst, float(np.max(np.abs(series.values - np.cos(grid.times) ** (2 * n)))))
    return worst < 1e-10, f"max |L - cos^2N| = {worst:.2e}"


def check_sector_oracle(count: int = 50) -> Tuple[bool, str]:
    mismatches = []
    for k in range(count):
        n = (8, 10, 11, 12)[(k // 4) % 4]
        profile = sample_constraints(mu=(0.1 + 0.1 * (k % 4)) * n, n_sites=n, seed=7, realisation_index=k)
        built = build_sector(profile).dimension
        brute = root_component_size(profile)
        if built != brute:
            mismatches.append((k, built, brute))
    return not mismatches, f"{count} profiles, mismatches {mismatches}"


def check_exact_vs_krylov(count: int = 4) -> Tuple[bool, str]:
    grid = TimeGrid(6.0, 0.05)
    worst = 0.0
    for k in range(count):
        profile = sample_constraints(mu=2.0, n_sites=10, seed=11, realisation_index=k)
        basis, H = sector_for(profile)
        alpha = int(basis.states[basis.dimension // 2])
        exact = return_probability(H, alpha, grid, method="exact")
        krylov = return_probability(H, alpha, grid, method="krylov")
        worst = max(worst, float(np.max(np.abs(exact.values - krylov.values))))
    return worst < 1e-8, f"max pointwise difference {worst:.2e}"


def check_spectral_reflection() -> Tuple[bool, str]:
    worst = 0.0
    for k in range(4):
        profile = sample_constraints(mu=2.0, n_sites=10, seed=3, realisation_index=k)
        _, H = sector_for(profile)
        levels = np.sort(diagonalize(H, keep_vectors=False).eigenvalues)
        worst = max(worst, float(np.max(np.abs(levels + levels[::-1]))))
    return worst < 1e-9, f"max |E_k + E_(D-1-k)| = {worst:.2e}"


def check_level_statistics() -> Tuple[bool, str]:
    rng = Generator(PCG64(SeedSequence(2024)))
    poisson = spacing_ratios(sample_poisson_levels(20_000, rng)).mean
    goe = float(np.mean(np.concatenate([
        spacing_ratios(sample_goe_levels(2000, rng), central_fraction=0.5).ratios
        for _ in range(8)
    ])))
    ok = abs(poisson - POISSON_MEAN_RATIO) < 0.01 and abs(goe - GOE_MEAN_RATIO) < 0.01
    return ok, f"<r> Poisson {poisson:.4f}, GOE {goe:.4f}"


def check_tli_breakdown() -> Tuple[bool, str]:
    n = 10
    basis, H = sector_for(pxp_profile(n))
    alpha = neel_state(n)
    grid = TimeGrid(18.0, 0.05)
    exact = return_probability(H, alpha, grid)
    lanczos = lanczos_extend(H, alpha, H.dimension)
    residual = cost(exact, tli_return(lanczos, grid))
    ok = lanczos.exhausted and residual < 1e-8 and lanczos.orthonormality_error() < 1e-8
    return ok, f"D_K={lanczos.krylov_dim} of D_H={basis.dimension}, cost {residual:.2e}"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("pxp_dimensions", check_pxp_dimensions),
    ("free_spin_return", check_free_spin_return),
    ("sector_oracle", check_sector_oracle),
    ("exact_vs_krylov", check_exact_vs_krylov),
    ("spectral_reflection", check_spectral_reflection),
    ("level_statistics", check_level_statistics),
    ("tli_breakdown", check_tli_breakdown),
]


def run_selftest() -> pd.DataFrame:
    """
    Run every oracle check.

    Returns:
        One row per check (name, passed, detail)

    Raises:
        SelftestFailure: Listing every check that failed or raised
    """
    results = []
    for name, check in CHECKS:
        try:
            passed, detail = check()
        except Exception as exc:
            logger.exception(f"Self-test {name} raised")
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"{name}: {'ok' if passed else 'FAILED'} ({detail})")
        results.append(CheckResult(name, bool(passed), detail))

    failures = [f"{r.name}: {r.detail}" for r in results if not r.passed]
    if failures:
        raise SelftestFailure(failures)
    return pd.DataFrame([r.__dict__ for r in results])
