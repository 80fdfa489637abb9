"""
Dagster op for the truncated-Lanczos sweep: minimal Krylov order m_c of every
long-lived state, averaged per mu/N and chain length.
"""
import os

import pandas as pd
from dagster import MetadataValue, Output, op

from constrained_chain.ensemble_config import mu_grid
from constrained_chain.outputs import RunManifest, points_to_frame, write_frame
from constrained_chain.tli import aggregate_mc, mc_realisations
from scar_pipeline.configs import TliSweepConfig


@op
def tli_sweep_op(context, config: TliSweepConfig):
    """
    m_c statistics for each chain length in config.n_sites.

    Returns:
        Dictionary with the output directory and point count
    """
    run_config = config.resolve()
    context.log.info(
        f"TLI sweep: N={list(run_config.ensemble.n_sites)}, cost_tol={run_config.tli.cost_tol}"
    )
    try:
        tables = [
            mc_realisations(
                mu_grid(run_config.ensemble.mu_over_n, n),
                n,
                run_config.ensemble.realisations,
                run_config.grid_for(n),
                run_config.criterion(),
                run_config.tli.cost_tol,
                run_config.sweep_settings(),
            )
            for n in run_config.ensemble.n_sites
        ]
    except Exception as e:
        context.log.error(f"Error in TLI sweep: {str(e)}")
        raise

    table = pd.concat(tables, ignore_index=True)
    frame = points_to_frame(aggregate_mc(table))
    out = run_config.run.out
    manifest = RunManifest(command=["dagster", "tli_sweep_op"], config=run_config.snapshot(),
                           seed=run_config.ensemble.seed)
    manifest.add_output(write_frame(table, os.path.join(out, "tli_realisations.csv")))
    path = manifest.add_output(write_frame(frame, os.path.join(out, "tli.csv")))
    manifest.write(out)

    return Output(
        value={"points": len(frame), "out": out},
        metadata={
            "tli_csv": MetadataValue.path(path),
            "lls_used": MetadataValue.int(int(frame["n_lls_used"].sum()) if len(frame) else 0),
            "points": MetadataValue.json(
                frame[["N", "mu_over_N", "mean_mc", "mean_mc_over_N"]].to_dict("records")
            ),
        },
    )
