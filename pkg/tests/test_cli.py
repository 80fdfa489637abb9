import filecmp
import os

import pandas as pd
import pytest

from constrained_chain.cli_runner import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, run
from constrained_chain.outputs import MANIFEST_NAME, read_manifest, sha256_file

SMALL = ["--n", "8", "--tmax", "4", "--dt", "0.1"]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in list(os.environ):
        if name.startswith("CHAIN_"):
            monkeypatch.delenv(name)


def _ensemble(out, realisations, *extra):
    return run(["ensemble", *SMALL, "--mu", "2", "--realisations", str(realisations),
                "--out", str(out), *extra])


def test_parser_knows_every_command():
    parser = build_parser()
    for command in ("evolve", "ensemble", "tli", "defect", "levels", "selftest"):
        assert parser.parse_args([command]).command == command
    assert parser.parse_args(["scan", "--mu", "2"]).mu == 2.0
    assert parser.parse_args(["merge", "a.csv"]).inputs == ["a.csv"]


def test_evolve_writes_checksummed_outputs(tmp_path):
    assert run(["evolve", *SMALL, "--out", str(tmp_path)]) == EXIT_OK
    manifest = read_manifest(str(tmp_path / MANIFEST_NAME))
    target = tmp_path / "return_probability.csv"
    assert manifest["outputs"]["return_probability.csv"] == sha256_file(str(target))
    assert manifest["extra"]["D_H"] == 47
    assert manifest["config"]["propagator"]["dt"] == 0.1
    frame = pd.read_csv(target)
    assert frame.shape == (1, 41)
    assert frame.iloc[0, 0] == 1.0
    assert float(frame.columns[-1]) == pytest.approx(4.0)


def test_evolve_records_fock_components(tmp_path, monkeypatch):
    assert run(["evolve", *SMALL, "--out", str(tmp_path / "full")]) == EXIT_OK
    components = read_manifest(str(tmp_path / "full" / MANIFEST_NAME))["extra"]["components"]
    assert components[0] == 47
    assert sum(components) == 2**8
    monkeypatch.setenv("CHAIN_SECTOR__EXHAUSTIVE_LIMIT", "6")
    assert run(["evolve", *SMALL, "--out", str(tmp_path / "limited")]) == EXIT_OK
    assert "components" not in read_manifest(str(tmp_path / "limited" / MANIFEST_NAME))["extra"]


def test_evolve_with_density_and_defect(tmp_path):
    code = run(["evolve", *SMALL, "--site", "3", "--q", "2", "--density", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "density.csv").exists()
    assert "density.csv" in read_manifest(str(tmp_path / MANIFEST_NAME))["outputs"]


def test_invalid_threshold_is_a_config_error(tmp_path):
    assert run(["evolve", *SMALL, "--threshold", "1.5", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert not (tmp_path / MANIFEST_NAME).exists()


def test_bad_flag_value_is_a_config_error(tmp_path):
    assert run(["evolve", "--boundary", "helical", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert run(["ensemble", "--realisations", "many", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert not (tmp_path / MANIFEST_NAME).exists()


def test_help_exits_cleanly(capsys):
    assert run(["ensemble", "--help"]) == EXIT_OK
    assert "--realisation-start" in capsys.readouterr().out


def test_evolve_needs_a_single_size(tmp_path):
    assert run(["evolve", "--n", "8,10", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_state_outside_the_sector_is_a_runtime_error(tmp_path):
    assert run(["evolve", *SMALL, "--state", "11000000", "--out", str(tmp_path)]) == EXIT_RUNTIME


def test_scan(tmp_path):
    assert run(["scan", *SMALL, "--mu", "2", "--out", str(tmp_path)]) == EXIT_OK
    manifest = read_manifest(str(tmp_path / MANIFEST_NAME))
    records = pd.read_csv(tmp_path / "lls_records.csv", dtype={"bits": str})
    assert len(records) == manifest["extra"]["D_H"]
    assert records["lls"].sum() == manifest["extra"]["n_lls"]


def test_ensemble_is_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _ensemble(first, 3) == EXIT_OK
    assert _ensemble(second, 3) == EXIT_OK
    for name in ("realisations.csv", "ensemble.csv"):
        assert filecmp.cmp(first / name, second / name, shallow=False)
    manifest = read_manifest(str(first / MANIFEST_NAME))
    assert [s["realisation_index"] for s in manifest["seeds"]] == [0, 1, 2]


def test_ensemble_with_several_thresholds(tmp_path):
    assert _ensemble(tmp_path, 2, "--thresholds", "0.5,0.6") == EXIT_OK
    frame = pd.read_csv(tmp_path / "ensemble.csv")
    assert sorted(frame["threshold"]) == [0.5, 0.6]


def test_merge_equals_the_larger_run(tmp_path):
    small, large, merged = tmp_path / "small", tmp_path / "large", tmp_path / "merged"
    assert _ensemble(small, 2) == EXIT_OK
    assert _ensemble(large, 4) == EXIT_OK
    code = run(["merge", str(small / "realisations.csv"), str(large / "realisations.csv"),
                "--out", str(merged)])
    assert code == EXIT_OK
    assert filecmp.cmp(merged / "ensemble.csv", large / "ensemble.csv", shallow=False)


def _merged_ensemble(tmp_path, runs):
    outs = []
    for k, extra in enumerate(runs):
        out = tmp_path / f"part{k}"
        assert run(["ensemble", *SMALL, *extra, "--out", str(out)]) == EXIT_OK
        outs.append(str(out / "realisations.csv"))
    merged = tmp_path / "merged"
    assert run(["merge", *outs, "--out", str(merged)]) == EXIT_OK
    return merged / "ensemble.csv"


def test_merge_of_a_split_mu_range_equals_one_run(tmp_path):
    whole = tmp_path / "whole"
    assert run(["ensemble", *SMALL, "--mu-over-n", "0.25:0.5:0.25", "--realisations", "3",
                "--out", str(whole)]) == EXIT_OK
    merged = _merged_ensemble(tmp_path, [
        ["--mu-over-n", "0.5", "--realisations", "3"],
        ["--mu-over-n", "0.25", "--realisations", "3"],
    ])
    assert filecmp.cmp(merged, whole / "ensemble.csv", shallow=False)


def test_merge_of_disjoint_realisation_ranges_equals_one_run(tmp_path):
    whole = tmp_path / "whole"
    assert _ensemble(whole, 4) == EXIT_OK
    merged = _merged_ensemble(tmp_path, [
        ["--mu", "2", "--realisations", "2"],
        ["--mu", "2", "--realisations", "2", "--realisation-start", "2"],
    ])
    assert filecmp.cmp(merged, whole / "ensemble.csv", shallow=False)


def test_realisation_start_offsets_the_seed_table(tmp_path):
    assert _ensemble(tmp_path, 2, "--realisation-start", "5") == EXIT_OK
    manifest = read_manifest(str(tmp_path / MANIFEST_NAME))
    assert [s["realisation_index"] for s in manifest["seeds"]] == [5, 6]


def test_merge_adds_runs_with_different_seeds(tmp_path):
    merged = _merged_ensemble(tmp_path, [
        ["--mu", "2", "--realisations", "3", "--seed", "1"],
        ["--mu", "2", "--realisations", "3", "--seed", "2"],
    ])
    assert int(pd.read_csv(merged)["realisations"].iloc[0]) == 6


def test_merge_refuses_different_grids(tmp_path):
    coarse = tmp_path / "coarse"
    fine = tmp_path / "fine"
    assert _ensemble(coarse, 2) == EXIT_OK
    assert run(["ensemble", "--n", "8", "--tmax", "4", "--dt", "0.05", "--mu", "2",
                "--realisations", "2", "--out", str(fine)]) == EXIT_OK
    code = run(["merge", str(coarse / "realisations.csv"), str(fine / "realisations.csv"),
                "--out", str(tmp_path / "merged")])
    assert code == EXIT_RUNTIME


def test_defect(tmp_path):
    assert run(["defect", *SMALL, "--site", "4", "--out", str(tmp_path)]) == EXIT_OK
    for name in ("defect_return", "defect_overlaps", "defect_density", "defect_lightcone"):
        assert (tmp_path / f"{name}.csv").exists()
    lightcone = pd.read_csv(tmp_path / "defect_lightcone.csv")
    assert list(lightcone["site"]) == list(range(8))


def test_levels(tmp_path):
    assert run(["levels", "--n", "8", "--mu", "2", "--realisations", "2",
                "--out", str(tmp_path)]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "levels.csv")
    assert int(frame[["realisations", "skipped", "symmetric"]].iloc[0].sum()) == 2


def test_tli(tmp_path):
    assert run(["tli", *SMALL, "--mu", "2", "--realisations", "2", "--out", str(tmp_path)]) == EXIT_OK
    frame = pd.read_csv(tmp_path / "tli.csv")
    assert list(frame["N"]) == [8]
    assert (tmp_path / "tli_realisations.csv").exists()


def test_environment_sets_the_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("CHAIN_ENSEMBLE__SEED", "41")
    assert run(["scan", *SMALL, "--mu", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert read_manifest(str(tmp_path / MANIFEST_NAME))["seed"] == 41


@pytest.mark.slow
def test_selftest(tmp_path):
    assert run(["selftest", "--out", str(tmp_path)]) == EXIT_OK
    results = pd.read_csv(tmp_path / "selftest.csv")
    assert results["passed"].all()
