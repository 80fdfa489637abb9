import logging

import pytest

from constrained_chain.config import RunConfig, load_config
from constrained_chain.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# scaled ensemble\n"
        "ensemble.seed = 3\n"
        "ensemble.n_sites = 10,12\n"
        "propagator.dt = 0.1\n"
        "lls.threshold = 0.6\n"
    )
    return str(path)


def test_defaults():
    config = load_config(environ={})
    assert config == RunConfig()
    assert config.ensemble.n_sites == (12,)
    assert config.propagator.t_max is None
    assert config.lls.threshold == 0.5 and config.lls.min_crossings == 3
    assert config.tli.cost_tol == 0.01


def test_file_values(config_file):
    config = load_config(config_file, environ={})
    assert config.ensemble.seed == 3
    assert config.ensemble.n_sites == (10, 12)
    assert config.propagator.dt == 0.1
    assert config.criterion().threshold == 0.6


def test_environment_overrides_file(config_file):
    environ = {"CHAIN_ENSEMBLE__SEED": "9", "CHAIN_LOG_LEVEL": "debug", "HOME": "/root"}
    config = load_config(config_file, environ=environ)
    assert config.ensemble.seed == 9
    assert config.run.log_level == "debug"


def test_flags_override_everything_and_warn(config_file, caplog):
    environ = {"CHAIN_ENSEMBLE__SEED": "9"}
    with caplog.at_level(logging.WARNING, logger="constrained_chain.config"):
        config = load_config(config_file, {"ensemble.seed": 17, "run.workers": None}, environ)
    assert config.ensemble.seed == 17
    assert config.run.workers == 1
    assert "ensemble.seed" in caplog.text


def test_flag_tuples_are_accepted():
    config = load_config(overrides={"ensemble.n_sites": [8, 10]}, environ={})
    assert config.ensemble.n_sites == (8, 10)


def test_every_problem_is_reported(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("ensemble.colour = red\nwidget.size = 3\npropagator.dt = fast\n")
    with pytest.raises(ConfigError) as excinfo:
        load_config(str(path), environ={})
    problems = excinfo.value.problems
    assert len(problems) == 3
    assert any("ensemble.colour" in p for p in problems)
    assert any("propagator.dt" in p for p in problems)


@pytest.mark.parametrize(
    "overrides",
    [
        {"lls.threshold": 1.5},
        {"ensemble.boundary": "twisted"},
        {"propagator.method": "magic"},
        {"run.workers": 0},
        {"run.log_level": "LOUD"},
        {"ensemble.n_sites": [1]},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides, environ={})


def test_empty_t_max_means_default(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("propagator.t_max =\n")
    config = load_config(str(path), environ={})
    assert config.propagator.t_max is None
    assert config.grid_for(12).t_max == 18.0
    assert config.grid_for(24).t_max == 50.0


def test_explicit_t_max():
    config = load_config(overrides={"propagator.t_max": 6.0, "propagator.dt": 0.5}, environ={})
    grid = config.grid_for(20)
    assert (grid.t_max, grid.dt, grid.n_steps) == (6.0, 0.5, 12)


def test_missing_file():
    with pytest.raises(ConfigError) as excinfo:
        load_config("/nonexistent/run.conf", environ={})
    assert "does not exist" in str(excinfo.value)


def test_snapshot_and_settings():
    config = load_config(overrides={"run.workers": 3, "ensemble.seed": 5}, environ={})
    snapshot = config.snapshot()
    assert snapshot["ensemble"]["n_sites"] == [12]
    assert snapshot["run"]["workers"] == 3
    settings = config.sweep_settings()
    assert settings.workers == 3 and settings.seed == 5


def test_sweep_settings_carry_the_realisation_offset_and_breakdown_tolerance():
    config = load_config(
        overrides={"ensemble.realisation_start": 40, "tli.breakdown_tol": 1e-6}, environ={}
    )
    settings = config.sweep_settings()
    assert settings.realisation_start == 40
    assert settings.breakdown_tol == 1e-6


@pytest.mark.parametrize(
    "overrides",
    [{"ensemble.realisation_start": -1}, {"tli.breakdown_tol": 0.0}, {"sector.exhaustive_limit": 1}],
)
def test_invalid_sweep_values(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides, environ={})
