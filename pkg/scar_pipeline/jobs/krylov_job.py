"""
Dagster job for the truncated-Lanczos analysis.
"""
from dagster import job

from scar_pipeline.ops.tli_op import tli_sweep_op


@job
def krylov_job():
    """m_c statistics against mu/N for several chain lengths."""
    tli_sweep_op()
