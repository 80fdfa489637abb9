# Dagster jobs
from scar_pipeline.jobs.defect_job import defect_job
from scar_pipeline.jobs.krylov_job import krylov_job
from scar_pipeline.jobs.weak_ergodicity_job import weak_ergodicity_job

__all__ = ["weak_ergodicity_job", "krylov_job", "defect_job"]
