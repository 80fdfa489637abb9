import os

import pandas as pd
import pytest

from constrained_chain.outputs import MANIFEST_NAME, read_manifest
from scar_pipeline import defs
from scar_pipeline.jobs import defect_job, krylov_job, weak_ergodicity_job


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in list(os.environ):
        if name.startswith("CHAIN_"):
            monkeypatch.delenv(name)


def test_definitions_register_every_job():
    for name in ("weak_ergodicity_job", "krylov_job", "defect_job"):
        assert defs.get_job_def(name).name == name


def test_defect_job(tmp_path):
    out = str(tmp_path / "defect")
    result = defect_job.execute_in_process(run_config={
        "ops": {"defect_experiment_op": {"config": {
            "n_sites": [8], "t_max": 4.0, "site": 4, "out": out,
        }}}
    })
    assert result.success
    value = result.output_for_node("defect_experiment_op")
    assert set(value) == {"clean_is_lls", "defect_is_lls"}
    assert set(read_manifest(os.path.join(out, MANIFEST_NAME))["outputs"]) == {
        "defect_return.csv", "defect_overlaps.csv", "defect_density.csv", "defect_lightcone.csv",
    }


def test_weak_ergodicity_job(tmp_path):
    sweep = {"n_sites": [8], "t_max": 4.0, "mu_over_n": "0.25", "realisations": 2}
    result = weak_ergodicity_job.execute_in_process(run_config={"ops": {
        "ensemble_sweep_op": {"config": {**sweep, "out": str(tmp_path / "ensemble")}},
        "threshold_sweep_op": {"config": {**sweep, "thresholds": [0.5, 0.6],
                                          "out": str(tmp_path / "thresholds")}},
        "level_stats_op": {"config": {**sweep, "out": str(tmp_path / "levels")}},
    }})
    assert result.success
    thresholds = pd.read_csv(tmp_path / "thresholds" / "ensemble.csv")
    assert sorted(thresholds["threshold"]) == [0.5, 0.6]
    assert (tmp_path / "levels" / "levels.csv").exists()


def test_krylov_job(tmp_path):
    result = krylov_job.execute_in_process(run_config={"ops": {"tli_sweep_op": {"config": {
        "n_sites": [8], "t_max": 4.0, "mu_over_n": "0.25", "realisations": 2,
        "realisation_start": 3, "out": str(tmp_path),
    }}}})
    assert result.success
    assert list(pd.read_csv(tmp_path / "tli.csv")["N"]) == [8]
    assert list(pd.read_csv(tmp_path / "tli_realisations.csv")["realisation_index"]) == [3, 4]
