"""
Dagster ops for the weak-ergodicity sweeps: LLS probability and density
against mu/N, the threshold sensitivity sweep and level statistics.
"""
import os

import pandas as pd
from dagster import MetadataValue, Output, op

from constrained_chain.ensemble_config import mu_grid
from constrained_chain.lls import aggregate_realisations, ensemble_realisations
from constrained_chain.outputs import RunManifest, points_to_frame, write_frame
from constrained_chain.spectral import ensemble_level_stats
from scar_pipeline.configs import EnsembleSweepConfig, LevelStatsConfig, ThresholdSweepConfig


def _sweep_tables(run_config, thresholds):
    tables = []
    for n in run_config.ensemble.n_sites:
        tables.append(
            ensemble_realisations(
                mu_grid(run_config.ensemble.mu_over_n, n),
                n,
                run_config.ensemble.realisations,
                run_config.grid_for(n),
                thresholds,
                run_config.lls.min_crossings,
                run_config.sweep_settings(),
            )
        )
    return pd.concat(tables, ignore_index=True)


def _write_sweep(context, name, run_config, table):
    out = run_config.run.out
    manifest = RunManifest(command=["dagster", name], config=run_config.snapshot(),
                           seed=run_config.ensemble.seed)
    points = points_to_frame(aggregate_realisations(table))
    realisations_path = manifest.add_output(write_frame(table, os.path.join(out, "realisations.csv")))
    ensemble_path = manifest.add_output(write_frame(points, os.path.join(out, "ensemble.csv")))
    manifest.write(out)
    context.log.info(f"Wrote {len(points)} ensemble points to {ensemble_path}")
    return points, {
        "rows": MetadataValue.int(len(table)),
        "excluded": MetadataValue.int(int(points["excluded"].sum()) if len(points) else 0),
        "realisations_csv": MetadataValue.path(realisations_path),
        "ensemble_csv": MetadataValue.path(ensemble_path),
        "points": MetadataValue.json(
            points[["threshold", "N", "mu_over_N", "p", "rho_mean"]].to_dict("records")
        ),
    }


@op
def ensemble_sweep_op(context, config: EnsembleSweepConfig):
    """
    LLS probability p and density rho against mu/N for one threshold.

    Returns:
        Dictionary with the ensemble table path and point count
    """
    run_config = config.resolve()
    context.log.info(
        f"Ensemble sweep: N={list(run_config.ensemble.n_sites)}, "
        f"mu/N={run_config.ensemble.mu_over_n}, {run_config.ensemble.realisations} realisations"
    )
    try:
        table = _sweep_tables(run_config, [run_config.lls.threshold])
        points, metadata = _write_sweep(context, "ensemble_sweep_op", run_config, table)
    except Exception as e:
        context.log.error(f"Error in ensemble sweep: {str(e)}")
        raise
    return Output(value={"points": len(points), "out": run_config.run.out}, metadata=metadata)


@op
def threshold_sweep_op(context, config: ThresholdSweepConfig):
    """Same sweep classified against several thresholds from one set of evolutions."""
    run_config = config.resolve()
    context.log.info(f"Threshold sweep over L_th={config.thresholds}")
    try:
        table = _sweep_tables(run_config, list(config.thresholds))
        points, metadata = _write_sweep(context, "threshold_sweep_op", run_config, table)
    except Exception as e:
        context.log.error(f"Error in threshold sweep: {str(e)}")
        raise
    return Output(value={"points": len(points), "out": run_config.run.out}, metadata=metadata)


@op
def level_stats_op(context, config: LevelStatsConfig):
    """Mean gap ratio of the largest sector against mu/N."""
    run_config = config.resolve()
    points = []
    try:
        for n in run_config.ensemble.n_sites:
            points.extend(
                ensemble_level_stats(
                    mu_grid(run_config.ensemble.mu_over_n, n),
                    n,
                    run_config.ensemble.realisations,
                    run_config.sweep_settings(),
                    run_config.spectral.degeneracy_tol,
                    run_config.spectral.central_fraction,
                )
            )
    except Exception as e:
        context.log.error(f"Error in level statistics: {str(e)}")
        raise

    out = run_config.run.out
    frame = points_to_frame(points)
    manifest = RunManifest(command=["dagster", "level_stats_op"], config=run_config.snapshot(),
                           seed=run_config.ensemble.seed)
    path = manifest.add_output(write_frame(frame, os.path.join(out, "levels.csv")))
    manifest.write(out)
    for point in points:
        context.log.info(f"N={point.n_sites} mu/N={point.mu_over_n:.3f}: <r>={point.mean_r:.4f}")
    return Output(
        value={"points": len(points), "out": out},
        metadata={
            "levels_csv": MetadataValue.path(path),
            "skipped": MetadataValue.int(int(frame["skipped"].sum()) if len(frame) else 0),
            "symmetric": MetadataValue.int(int(frame["symmetric"].sum()) if len(frame) else 0),
            "points": MetadataValue.json(frame[["N", "mu_over_N", "mean_r"]].to_dict("records")),
        },
    )
