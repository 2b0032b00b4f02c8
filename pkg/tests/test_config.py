"""
Tests for run configuration and scenarios
"""

import json
import logging
from pathlib import Path

import numpy as np
import pytest

from fuelcell_mpc import configure_logging, settings
from fuelcell_mpc.config import RunConfig, Scenario, available_scenarios
from fuelcell_mpc.exceptions import ConfigurationError

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / 'configs' / 'default.json'


def test_shipped_scenarios():
    assert {'step', 'ramp_step'} <= set(available_scenarios())
    step = Scenario.load('step')
    assert step.duration == 120.0
    assert step.current_at(0.0) == 125.0
    assert step.current_at(24.75) == pytest.approx(140.0)
    assert step.current_at(200.0) == 115.0
    assert len(step.currents(0.5)) == 241


def test_scenario_from_file(tmp_path):
    path = tmp_path / 'short.json'
    path.write_text(json.dumps({'name': 'short', 'duration': 5.0, 'knots': [[0.0, 100.0], [2.0, 120.0]]}))
    scenario = Scenario.load(path)
    np.testing.assert_allclose(scenario.currents(1.0), [100.0, 110.0, 120.0, 120.0, 120.0, 120.0])


def test_invalid_scenarios_are_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        Scenario(name='x', duration=10.0, knots=((5.0, 100.0), (2.0, 110.0)))
    with pytest.raises(ConfigurationError):
        Scenario(name='x', duration=10.0, knots=((0.0, 250.0),))
    with pytest.raises(ConfigurationError):
        Scenario.from_dict({'name': 'x', 'duration': 1.0, 'knots': [[0.0, 100.0]], 'profile': 'step'})
    with pytest.raises(ConfigurationError):
        Scenario.load('no_such_scenario')
    with pytest.raises(ConfigurationError):
        RunConfig(scenario=Scenario(name='x', duration=10.25, knots=((0.0, 100.0),)))


def test_default_config_file_loads():
    config = RunConfig.load(DEFAULT_CONFIG)
    assert config.output_dir == 'runs/default'
    assert config.mpc.du_min == (-np.inf, -np.inf)
    assert config.scenario.name == 'step'
    assert config.mpc.h_p == 20 and config.mpc.h_u == 5


def test_unknown_keys_and_versions_are_rejected():
    with pytest.raises(ConfigurationError, match='unknown'):
        RunConfig.from_dict({'colour': 'blue'})
    with pytest.raises(ConfigurationError, match='version'):
        RunConfig.from_dict({'version': 2})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({'mpc': {'horizon': 10}})
    with pytest.raises(ConfigurationError):
        RunConfig(controller='pid')


def test_bad_files_are_configuration_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        RunConfig.load(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"seed": ')
    with pytest.raises(ConfigurationError):
        RunConfig.load(broken)
    listing = tmp_path / 'list.json'
    listing.write_text('[1, 2]')
    with pytest.raises(ConfigurationError):
        RunConfig.load(listing)


def test_training_seed_follows_run_seed():
    assert RunConfig.from_dict({'seed': 7}).train.seed == 7
    assert RunConfig.from_dict({'seed': 7, 'train': {'seed': 3}}).train.seed == 3
    assert RunConfig().with_seed(11).train.seed == 11


def test_config_hash_is_stable():
    config = RunConfig()
    assert config.config_hash() == RunConfig().config_hash()
    assert config.config_hash() != config.with_seed(1).config_hash()
    restored = RunConfig.from_dict(config.to_dict())
    assert restored.config_hash() == config.config_hash()


def test_scenario_overrides_noise_and_seed():
    scenario = Scenario(name='x', duration=1.0, knots=((0.0, 100.0),), noise_std=(0.0, 0.0), seed=5)
    config = RunConfig(scenario=scenario, seed=1)
    assert config.simulation_noise == (0.0, 0.0)
    assert config.simulation_seed == 5
    assert RunConfig(seed=1).simulation_seed == 1


def test_paths_default_to_output_dir(tmp_path):
    config = RunConfig(output_dir=str(tmp_path))
    assert config.weights_path == tmp_path / 'weights.json'
    assert config.dataset_path == tmp_path / 'dataset.csv'
    with pytest.raises(ConfigurationError):
        config.check_files()
    config.replace(controller='hold').check_files()


def test_package_settings_hold_only_runtime_switches():
    assert sorted(vars(settings)) == ['log_level', 'progress_bars']
    assert configure_logging('warning').level == logging.WARNING
    assert configure_logging().level == logging.getLevelName(settings.log_level)
