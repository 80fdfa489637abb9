"""
Dagster pipeline for randomly constrained spin chain experiments.
"""
from dagster import Definitions
from scar_pipeline.jobs import defect_job, krylov_job, weak_ergodicity_job

defs = Definitions(
    jobs=[weak_ergodicity_job, krylov_job, defect_job]
)
