"""
Tests for the command-line interface
"""

import json

import pytest
from click.testing import CliRunner

from fuelcell_mpc.api.simulate import read_trace
from fuelcell_mpc.cli import main
from fuelcell_mpc.model.datagen import generate_corpus
from fuelcell_mpc.version import __version__


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / 'flat.json'
    path.write_text(json.dumps({
        'name': 'flat', 'duration': 5.0, 'knots': [[0.0, 125.0]], 'initial_flows': [250.0, 500.0]
    }))
    return path


def test_version(runner):
    result = runner.invoke(main, ['--version'])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_simulate_hold_writes_trace_and_plots(runner, tmp_path, scenario_file):
    out = tmp_path / 'out'
    result = runner.invoke(main, ['--quiet', 'simulate', '--controller', 'hold', '--scenario', str(scenario_file),
                                  '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert (out / 'flat_hold.csv').exists()
    assert (out / 'flat_hold.meta.json').exists()
    assert (out / 'flat_hold_voltage.svg').exists()
    assert 'flat / hold' in result.output


def test_missing_weights_exit_with_config_code(runner, tmp_path, scenario_file):
    result = runner.invoke(main, ['--quiet', 'simulate', '--scenario', str(scenario_file), '--out', str(tmp_path)])
    assert result.exit_code == 3


def test_bad_config_exits_with_config_code(runner, tmp_path):
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'colour': 'blue'}))
    result = runner.invoke(main, ['simulate', '--config', str(config), '--controller', 'hold'])
    assert result.exit_code == 3


def test_unknown_controller_is_a_usage_error(runner):
    result = runner.invoke(main, ['simulate', '--controller', 'pid'])
    assert result.exit_code == 2


def test_plot_from_trace(runner, tmp_path, scenario_file):
    out = tmp_path / 'out'
    runner.invoke(main, ['--quiet', 'simulate', '--controller', 'hold', '--scenario', str(scenario_file),
                         '--out', str(out), '--no-plots'])
    assert not (out / 'flat_hold_voltage.svg').exists()
    plots = tmp_path / 'plots'
    result = runner.invoke(main, ['plot', str(out / 'flat_hold.csv'), '--out', str(plots)])
    assert result.exit_code == 0, result.output
    assert (plots / 'flat_hold_voltage.svg').exists()
    assert (plots / 'flat_hold_constraints.svg').exists()


def test_compare_hold_and_plant_model(runner, tmp_path, scenario_file):
    result = runner.invoke(main, ['--quiet', 'compare', '--scenario', str(scenario_file), '--controllers', 'hold',
                                  'plant-mpc', '--out', str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / 'flat_comparison.csv').exists()
    assert (tmp_path / 'flat_comparison_voltage.svg').exists()


def test_diverging_training_exits_with_training_code(runner, tmp_path):
    dataset = generate_corpus(n=30, seed=2, verbose=False).save(tmp_path / 'corpus.csv')
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'train': {'learning_rate': 1e300, 'epochs': 20}}))
    result = runner.invoke(main, ['--quiet', 'train', '--config', str(config), '--dataset', str(dataset),
                                  '--out', str(tmp_path / 'out')])
    assert result.exit_code == 4
    assert not (tmp_path / 'out' / 'weights.json').exists()


def test_current_above_limit_exits_with_simulation_code(runner, tmp_path):
    scenario = tmp_path / 'overload.json'
    scenario.write_text(json.dumps({
        'name': 'overload', 'duration': 5.0, 'knots': [[0.0, 125.0], [2.0, 125.0], [2.5, 330.0]],
        'initial_flows': [250.0, 500.0], 'current_bounds': [60.0, 400.0]
    }))
    out = tmp_path / 'out'
    result = runner.invoke(main, ['--quiet', 'simulate', '--controller', 'hold', '--scenario', str(scenario),
                                  '--out', str(out)])
    assert result.exit_code == 5
    partial = read_trace(out / 'overload_hold.csv')
    assert len(partial) == 7
    assert partial['t'].iloc[-1] == 3.0
    assert partial['status'].iloc[-1] == 'failed'
