"""
Dagster op for the single-defect PXP experiment.
"""
import math
import os

from dagster import MetadataValue, Output, op

from constrained_chain.defect import defect_experiment
from constrained_chain.ensemble_config import Boundary
from constrained_chain.outputs import RunManifest, write_frame
from scar_pipeline.configs import DefectExperimentConfig


@op
def defect_experiment_op(context, config: DefectExperimentConfig):
    """Return probabilities, overlaps, densities and lightcone with and without the defect."""
    run_config = config.resolve()
    n = run_config.ensemble.n_sites[0]
    try:
        result = defect_experiment(
            n_sites=n,
            site=config.site,
            strength=config.strength,
            state=config.state,
            grid=run_config.grid_for(n),
            boundary=Boundary(run_config.ensemble.boundary),
            criterion=run_config.criterion(),
            method=run_config.propagator.method,
            dense_limit=run_config.propagator.dense_limit,
        )
    except Exception as e:
        context.log.error(f"Error in defect experiment: {str(e)}")
        raise

    out = run_config.run.out
    manifest = RunManifest(command=["dagster", "defect_experiment_op"],
                           config=run_config.snapshot(), seed=run_config.ensemble.seed)
    frames = {
        "defect_return.csv": result.returns,
        "defect_overlaps.csv": result.overlaps,
        "defect_density.csv": result.density.to_frame(),
        "defect_lightcone.csv": result.lightcone,
    }
    for name, frame in frames.items():
        manifest.add_output(write_frame(frame, os.path.join(out, name)))
    manifest.extra.update(clean_is_lls=result.clean_is_lls, defect_is_lls=result.defect_is_lls)
    manifest.write(out)

    context.log.info(
        f"q={config.strength}: clean LLS={result.clean_is_lls}, defect LLS={result.defect_is_lls}"
    )
    return Output(
        value={"clean_is_lls": result.clean_is_lls, "defect_is_lls": result.defect_is_lls},
        metadata={
            "clean_D_H": MetadataValue.int(result.clean_dimension),
            "defect_D_H": MetadataValue.int(result.defect_dimension),
            "lightcone": MetadataValue.json([
                {"site": int(row.site), "distance": int(row.distance),
                 "time": float(row.time) if math.isfinite(row.time) else None}
                for row in result.lightcone.itertuples()
            ]),
        },
    )
