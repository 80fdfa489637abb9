"""
Command-line entry point.

    run_chain evolve    return probability (and densities) for one profile and state
    run_chain scan      LLS classification of every state in one realisation
    run_chain ensemble  p and rho against mu/N (optionally several thresholds)
    run_chain tli       m_c statistics against mu/N
    run_chain defect    PXP chain with a single range-q defect
    run_chain levels    mean gap ratio against mu/N
    run_chain merge     combine partial per-realisation tables
    run_chain selftest  analytic-oracle suite

Exit codes: 0 ok, 1 configuration error, 2 runtime failure, 3 self-test failure.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence, Tuple

import pandas as pd
from dotenv import load_dotenv

from constrained_chain.config import LOG_LEVELS, RunConfig, load_config
from constrained_chain.defect import defect_experiment
from constrained_chain.ensemble_config import (
    Boundary,
    DefectSpec,
    apply_defect,
    format_state,
    mu_grid,
    parse_state,
    pxp_profile,
    sample_constraints,
)
from constrained_chain.errors import ChainError, ConfigError, SelftestFailure
from constrained_chain.fock_sector import all_components, sector_for
from constrained_chain.lls import (
    LLSCriterion,
    aggregate_realisations,
    classify_lls,
    ensemble_realisations,
    merge_realisation_tables,
    scan_sector,
)
from constrained_chain.outputs import (
    RunManifest,
    points_to_frame,
    read_frame,
    seed_table,
    write_frame,
)
from constrained_chain.propagator import return_probability, site_density
from constrained_chain.selftest import run_selftest
from constrained_chain.spectral import ensemble_level_stats
from constrained_chain.sweep import realisation_tasks
from constrained_chain.tli import aggregate_mc, mc_realisations

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_SELFTEST = 3

# argparse dest -> config key
FLAG_KEYS = {
    "n": "ensemble.n_sites",
    "mu_over_n": "ensemble.mu_over_n",
    "epsilon": "ensemble.epsilon",
    "min_range": "ensemble.min_range",
    "boundary": "ensemble.boundary",
    "seed": "ensemble.seed",
    "realisations": "ensemble.realisations",
    "realisation_start": "ensemble.realisation_start",
    "tmax": "propagator.t_max",
    "dt": "propagator.dt",
    "dense_limit": "propagator.dense_limit",
    "method": "propagator.method",
    "threshold": "lls.threshold",
    "min_crossings": "lls.min_crossings",
    "candidate_cap": "lls.candidate_cap",
    "cost_tol": "tli.cost_tol",
    "workers": "run.workers",
    "out": "run.out",
    "log_level": "run.log_level",
}


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of integers")


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of numbers")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file of section.key = value lines")
    parser.add_argument("--n", type=_int_list, help="chain length(s), comma separated")
    parser.add_argument("--epsilon", type=int)
    parser.add_argument("--min-range", type=int)
    parser.add_argument("--boundary", choices=[b.value for b in Boundary])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tmax", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--dense-limit", type=int)
    parser.add_argument("--method", choices=["auto", "exact", "krylov"])
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--min-crossings", type=int)
    parser.add_argument("--candidate-cap", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--log-level", type=str.upper)


def _sweep(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mu", type=float, help="single mean range instead of a mu/N sweep")
    parser.add_argument("--mu-over-n", help="start:stop:step")
    parser.add_argument("--realisations", type=int)
    parser.add_argument("--realisation-start", type=int, help="first realisation index of each mu stream")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_chain", description="Randomly constrained spin chain simulations"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    evolve = commands.add_parser("evolve", help="return probability for one profile and state")
    _common(evolve)
    evolve.add_argument("--mu", type=float, help="draw a random profile; PXP when omitted")
    evolve.add_argument("--realisation-index", type=int, default=0)
    evolve.add_argument("--state", default="z2", help="z2, z2' or a bit string (site 0 first)")
    evolve.add_argument("--site", type=int, help="defect site")
    evolve.add_argument("--q", type=int, default=2, help="defect range")
    evolve.add_argument("--density", action="store_true", help="also write site densities")

    scan = commands.add_parser("scan", help="LLS table for one realisation")
    _common(scan)
    scan.add_argument("--mu", type=float, required=True)
    scan.add_argument("--realisation-index", type=int, default=0)

    ensemble = commands.add_parser("ensemble", help="p and rho against mu/N")
    _common(ensemble)
    _sweep(ensemble)
    ensemble.add_argument("--thresholds", type=_float_list, help="several L_th, e.g. 0.5,0.6,0.7")

    tli = commands.add_parser("tli", help="m_c statistics against mu/N")
    _common(tli)
    _sweep(tli)
    tli.add_argument("--cost-tol", type=float)

    defect = commands.add_parser("defect", help="PXP with a single range-q defect")
    _common(defect)
    defect.add_argument("--state", default="z2")
    defect.add_argument("--site", type=int)
    defect.add_argument("--q", type=int, default=2)

    levels = commands.add_parser("levels", help="mean gap ratio against mu/N")
    _common(levels)
    _sweep(levels)

    merge = commands.add_parser("merge", help="combine partial per-realisation tables")
    merge.add_argument("inputs", nargs="+", help="realisations.csv files")
    merge.add_argument("--out")
    merge.add_argument("--log-level", type=str.upper)

    selftest = commands.add_parser("selftest", help="analytic-oracle suite")
    selftest.add_argument("--out")
    selftest.add_argument("--log-level", type=str.upper)
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    overrides = {key: getattr(args, dest, None) for dest, key in FLAG_KEYS.items()}
    return load_config(getattr(args, "config", None), overrides)


def _single_n(config: RunConfig) -> int:
    if len(config.ensemble.n_sites) != 1:
        raise ConfigError([f"--n takes one chain length here, got {list(config.ensemble.n_sites)}"])
    return config.ensemble.n_sites[0]


def _mu_points(args: argparse.Namespace, config: RunConfig, n_sites: int) -> List[Tuple[float, float]]:
    if getattr(args, "mu", None) is not None:
        return [(round(args.mu / n_sites, 12), args.mu)]
    return mu_grid(config.ensemble.mu_over_n, n_sites)


def _cmd_evolve(args, config: RunConfig, manifest: RunManifest) -> None:
    n = _single_n(config)
    e = config.ensemble
    if args.mu is None:
        profile = pxp_profile(n, Boundary(e.boundary))
    else:
        profile = sample_constraints(
            args.mu, e.epsilon, n, e.min_range, Boundary(e.boundary), e.seed, args.realisation_index
        )
    if args.site is not None:
        profile = apply_defect(profile, DefectSpec(site=args.site, strength=args.q))
    alpha = parse_state(args.state, n)
    basis, H = sector_for(profile, config.sector.max_dimension)
    grid = config.grid_for(n)
    p = config.propagator
    series = return_probability(
        H, alpha, grid, p.method, p.dense_limit, p.krylov_dim, p.substep_tol
    )
    manifest.extra.update(
        profile=profile.to_json(), state=format_state(alpha, n), D_H=basis.dimension
    )
    if n <= config.sector.exhaustive_limit:
        manifest.extra["components"] = [
            int(size) for size in all_components(profile, config.sector.exhaustive_limit)
        ]
    out = config.run.out
    manifest.add_output(write_frame(series.to_frame(), os.path.join(out, "return_probability.csv")))
    if args.density:
        density = site_density(
            H, basis.basis_vector(alpha), grid, p.method, p.dense_limit, p.krylov_dim, p.substep_tol
        )
        manifest.add_output(write_frame(density.to_frame(), os.path.join(out, "density.csv")))
    manifest.extra["lls"] = classify_lls(series, config.criterion()).qualifies


def _cmd_scan(args, config: RunConfig, manifest: RunManifest) -> None:
    n = _single_n(config)
    e, p = config.ensemble, config.propagator
    profile = sample_constraints(
        args.mu, e.epsilon, n, e.min_range, Boundary(e.boundary), e.seed, args.realisation_index
    )
    basis, H = sector_for(profile, config.sector.max_dimension)
    result = scan_sector(
        H, basis, config.grid_for(n), config.criterion(), config.lls.candidate_cap,
        e.seed, args.realisation_index, p.method, p.dense_limit, p.krylov_dim,
        p.substep_tol, config.run.workers,
    )
    frame = pd.DataFrame({
        "state": [r.state for r in result.records],
        "bits": [format_state(r.state, n) for r in result.records],
        "crossings": [r.crossings for r in result.records],
        "lls": [r.qualifies for r in result.records],
    })
    manifest.extra.update(
        profile=profile.to_json(), D_H=result.dimension, n_lls=result.n_lls,
        rho=result.rho, sampled=result.sampled,
    )
    manifest.add_output(write_frame(frame, os.path.join(config.run.out, "lls_records.csv")))


def _record_seeds(manifest: RunManifest, config: RunConfig, args, n_realisations: int) -> None:
    for n in config.ensemble.n_sites:
        tasks = realisation_tasks(_mu_points(args, config, n), n, n_realisations, config.sweep_settings())
        manifest.seeds.extend(seed_table(tasks))


def _cmd_ensemble(args, config: RunConfig, manifest: RunManifest) -> None:
    thresholds = list(args.thresholds) if args.thresholds else [config.lls.threshold]
    for th in thresholds:
        LLSCriterion(th, config.lls.min_crossings)
    tables = []
    for n in config.ensemble.n_sites:
        tables.append(
            ensemble_realisations(
                _mu_points(args, config, n), n, config.ensemble.realisations,
                config.grid_for(n), thresholds, config.lls.min_crossings,
                config.sweep_settings(),
            )
        )
    table = pd.concat(tables, ignore_index=True)
    _write_ensemble(table, config.run.out, manifest)
    _record_seeds(manifest, config, args, config.ensemble.realisations)


def _write_ensemble(table: pd.DataFrame, out: str, manifest: RunManifest) -> None:
    points = aggregate_realisations(table)
    manifest.add_output(write_frame(table, os.path.join(out, "realisations.csv")))
    manifest.add_output(write_frame(points_to_frame(points), os.path.join(out, "ensemble.csv")))
    manifest.extra["excluded"] = int(sum(p.excluded for p in points))


def _cmd_tli(args, config: RunConfig, manifest: RunManifest) -> None:
    tables = []
    for n in config.ensemble.n_sites:
        tables.append(
            mc_realisations(
                _mu_points(args, config, n), n, config.ensemble.realisations,
                config.grid_for(n), config.criterion(), config.tli.cost_tol,
                config.sweep_settings(),
            )
        )
    table = pd.concat(tables, ignore_index=True)
    out = config.run.out
    manifest.add_output(write_frame(table, os.path.join(out, "tli_realisations.csv")))
    manifest.add_output(write_frame(points_to_frame(aggregate_mc(table)), os.path.join(out, "tli.csv")))
    _record_seeds(manifest, config, args, config.ensemble.realisations)


def _cmd_defect(args, config: RunConfig, manifest: RunManifest) -> None:
    n = _single_n(config)
    p = config.propagator
    result = defect_experiment(
        n_sites=n,
        site=args.site,
        strength=args.q,
        state=args.state,
        grid=config.grid_for(n),
        boundary=Boundary(config.ensemble.boundary),
        criterion=config.criterion(),
        method=p.method,
        dense_limit=p.dense_limit,
    )
    out = config.run.out
    manifest.add_output(write_frame(result.returns, os.path.join(out, "defect_return.csv")))
    manifest.add_output(write_frame(result.overlaps, os.path.join(out, "defect_overlaps.csv")))
    manifest.add_output(write_frame(result.density.to_frame(), os.path.join(out, "defect_density.csv")))
    manifest.add_output(write_frame(result.lightcone, os.path.join(out, "defect_lightcone.csv")))
    manifest.extra.update(
        clean_is_lls=result.clean_is_lls,
        defect_is_lls=result.defect_is_lls,
        clean_D_H=result.clean_dimension,
        defect_D_H=result.defect_dimension,
    )


def _cmd_levels(args, config: RunConfig, manifest: RunManifest) -> None:
    points = []
    for n in config.ensemble.n_sites:
        points.extend(
            ensemble_level_stats(
                _mu_points(args, config, n), n, config.ensemble.realisations,
                config.sweep_settings(), config.spectral.degeneracy_tol,
                config.spectral.central_fraction,
            )
        )
    manifest.add_output(
        write_frame(points_to_frame(points), os.path.join(config.run.out, "levels.csv"))
    )
    _record_seeds(manifest, config, args, config.ensemble.realisations)


def _cmd_merge(args, config: RunConfig, manifest: RunManifest) -> None:
    tables = [read_frame(path) for path in args.inputs]
    merged = merge_realisation_tables(tables)
    logger.info(f"Merged {len(tables)} tables into {len(merged)} realisation rows")
    manifest.extra["inputs"] = list(args.inputs)
    _write_ensemble(merged, config.run.out, manifest)


def _cmd_selftest(args, config: RunConfig, manifest: RunManifest) -> None:
    results = run_selftest()
    manifest.add_output(write_frame(results, os.path.join(config.run.out, "selftest.csv")))


COMMANDS = {
    "evolve": _cmd_evolve,
    "scan": _cmd_scan,
    "ensemble": _cmd_ensemble,
    "tli": _cmd_tli,
    "defect": _cmd_defect,
    "levels": _cmd_levels,
    "merge": _cmd_merge,
    "selftest": _cmd_selftest,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run one subcommand and write its manifest.

    Returns:
        Process exit code
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse has already printed usage or help
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    load_dotenv()
    level = args.log_level or os.getenv("CHAIN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=level if level in LOG_LEVELS else "INFO",
        format=LOG_FORMAT,
    )

    try:
        config = _resolve(args)
    except ConfigError as e:
        for problem in e.problems:
            logger.error(f"Config error: {problem}")
        return EXIT_CONFIG
    logging.getLogger().setLevel(config.run.log_level.upper())

    manifest = RunManifest(
        command=["run_chain"] + argv, config=config.snapshot(), seed=config.ensemble.seed
    )
    try:
        COMMANDS[args.command](args, config, manifest)
        manifest.write(config.run.out)
    except ConfigError as e:
        for problem in e.problems:
            logger.error(f"Config error: {problem}")
        return EXIT_CONFIG
    except SelftestFailure as e:
        for failure in e.failures:
            logger.error(f"Self-test failed: {failure}")
        return EXIT_SELFTEST
    except ChainError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    except Exception:
        logger.exception(f"Unexpected error in {args.command}")
        return EXIT_RUNTIME

    logger.info(f"{args.command} finished; outputs in {config.run.out}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
