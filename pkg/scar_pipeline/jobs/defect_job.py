"""
Dagster job for the single-defect experiment.
"""
from dagster import job

from scar_pipeline.ops.defect_op import defect_experiment_op


@job
def defect_job():
    defect_experiment_op()
