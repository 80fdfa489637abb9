"""
Dagster job for the ensemble sweeps.
"""
from dagster import job

from scar_pipeline.ops.ensemble_ops import ensemble_sweep_op, level_stats_op, threshold_sweep_op


@job
def weak_ergodicity_job():
    """
    LLS probability and density against mu/N, the threshold sweep and
    level statistics.
    """
    ensemble_sweep_op()
    threshold_sweep_op()
    level_stats_op()
