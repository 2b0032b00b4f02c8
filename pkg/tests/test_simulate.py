"""
Tests for closed-loop simulation runs
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from fuelcell_mpc.api.simulate import compare, read_trace, run_scenario
from fuelcell_mpc.config import RunConfig, Scenario
from fuelcell_mpc.core.engine import TRACE_COLUMNS
from fuelcell_mpc.core.plant import PlantInputs, PlantParams, equilibrium_state, plant_output
from fuelcell_mpc.exceptions import ConfigurationError
from fuelcell_mpc.model.network import DEFAULT_SHAPE, Scaler, init_weights


def flat_scenario(duration=10.0, knots=((0.0, 125.0),), seed=None):
    return Scenario(name='flat', duration=duration, knots=knots, initial_flows=(250.0, 500.0), seed=seed)


def create_config(controller='hold', scenario=None, **changes):
    return RunConfig(scenario=scenario or flat_scenario(), controller=controller, slack_audit_steps=0, **changes)


def test_trace_has_one_row_per_step():
    results = run_scenario(create_config(), verbose=False)
    assert list(results.trace.columns) == TRACE_COLUMNS
    assert len(results.trace) == 21
    np.testing.assert_allclose(results.trace['t'], np.arange(21) * 0.5)
    assert results.metadata['controller'] == 'hold'
    assert results.metadata['scenario'] == 'flat'


def test_hold_keeps_flows_at_equilibrium():
    results = run_scenario(create_config(noise_std=(0.0, 0.0)), verbose=False)
    trace = results.trace
    assert np.all(trace['qh2'] == 250.0) and np.all(trace['qair'] == 500.0)
    v, p = plant_output(equilibrium_state(PlantInputs(250.0, 500.0, 125.0), PlantParams()),
                        PlantInputs(250.0, 500.0, 125.0), PlantParams())
    np.testing.assert_allclose(trace['v_true'], v, atol=1e-6)
    np.testing.assert_allclose(trace['p_true'], p, atol=1e-6)
    np.testing.assert_array_equal(trace['v_meas'], trace['v_true'])


def test_hold_settles_to_open_loop_equilibrium():
    scenario = flat_scenario(duration=200.0, knots=((0.0, 125.0), (1.0, 125.0), (1.5, 150.0)))
    trace = run_scenario(create_config(scenario=scenario, noise_std=(0.0, 0.0)), verbose=False).trace
    inputs = PlantInputs(250.0, 500.0, 150.0)
    v, p = plant_output(equilibrium_state(inputs, PlantParams()), inputs, PlantParams())
    assert trace['v_true'].iloc[-1] == pytest.approx(v, abs=5e-3)
    assert trace['p_true'].iloc[-1] == pytest.approx(p, abs=5e-3)


def test_measurements_lag_the_current_by_one_step():
    scenario = flat_scenario(knots=((0.0, 125.0), (2.0, 125.0), (2.5, 150.0)))
    trace = run_scenario(create_config(scenario=scenario, noise_std=(0.0, 0.0)), verbose=False).trace
    # Step 5 applies 150 A but still reads under 125 A
    assert trace['i'].iloc[5] == 150.0
    assert trace['v_true'].iloc[5] == pytest.approx(trace['v_true'].iloc[4], abs=1e-6)
    assert trace['v_true'].iloc[6] < trace['v_true'].iloc[5] - 0.1


def test_equal_runs_write_identical_traces(tmp_path):
    config = create_config('plant-mpc')
    first = run_scenario(config, verbose=False).export(tmp_path / 'a')
    second = run_scenario(config, verbose=False).export(tmp_path / 'b')
    assert first.read_bytes() == second.read_bytes()


def test_plant_mpc_keeps_commands_in_bounds():
    scenario = flat_scenario(knots=((0.0, 125.0), (2.0, 125.0), (2.5, 160.0)))
    trace = run_scenario(create_config('plant-mpc', scenario=scenario), verbose=False).trace
    assert trace['qh2'].between(100.0, 400.0).all()
    assert trace['qair'].between(300.0, 700.0).all()
    assert (trace['dqh2'].iloc[1:] >= -40.0 - 1e-9).all() and (trace['dqh2'].iloc[1:] <= 20.0 + 1e-9).all()


def test_logged_increments_match_flow_changes():
    scenario = flat_scenario(knots=((0.0, 125.0), (2.0, 125.0), (2.5, 160.0)))
    trace = run_scenario(create_config('plant-mpc', scenario=scenario), verbose=False).trace
    for flow, increment, start in (('qh2', 'dqh2', 250.0), ('qair', 'dqair', 500.0)):
        assert trace[flow].diff().abs().iloc[1:].max() > 0
        np.testing.assert_allclose(trace[flow].diff().iloc[1:], trace[increment].iloc[1:], rtol=0, atol=1e-9)
        assert trace[increment].iloc[0] == pytest.approx(trace[flow].iloc[0] - start, abs=1e-9)


def test_network_controller_runs_with_given_weights():
    weights = init_weights(DEFAULT_SHAPE, np.random.default_rng(0))
    scaler = Scaler(np.array([250.0, 500.0, 125.0, 48.0, 2.0]), np.array([80.0, 120.0, 35.0, 2.0, 0.3]),
                    np.array([48.0, 2.0]), np.array([2.0, 0.3]))
    results = run_scenario(create_config('nn-mpc'), weights, scaler, verbose=False)
    assert len(results.trace) == 21
    assert results.trace['qh2'].between(100.0, 400.0).all()


def test_missing_weights_file_is_a_configuration_error(tmp_path):
    config = create_config('nn-mpc', weights=str(tmp_path / 'missing.json'))
    with pytest.raises(ConfigurationError):
        run_scenario(config, verbose=False)


def test_export_writes_trace_and_sidecar(tmp_path):
    results = run_scenario(create_config(), verbose=False)
    path = results.export(tmp_path)
    assert path.name == 'flat_hold.csv'
    loaded = read_trace(path)
    assert list(loaded.columns) == TRACE_COLUMNS
    assert len(loaded) == 21
    sidecar = json.loads((tmp_path / 'flat_hold.meta.json').read_text())
    assert sidecar['controller'] == 'hold'
    assert sidecar['config_hash'] == create_config().config_hash()
    assert 'iae' in sidecar['metrics']


def test_plot_writes_two_svgs(tmp_path):
    results = run_scenario(create_config(), verbose=False)
    paths = results.plot(tmp_path)
    assert sorted(p.name for p in paths) == ['flat_hold_constraints.svg', 'flat_hold_voltage.svg']
    assert all(p.read_text().lstrip().startswith('<?xml') for p in paths)


def test_plots_draw_the_configured_pressure_limit(tmp_path, monkeypatch):
    limits = []

    def capture(traces, output_dir, scenario, reference=48.0, p_limit=None):
        limits.append(p_limit)
        return []

    monkeypatch.setattr('fuelcell_mpc.api.simulate.emit_plots', capture)
    base = create_config()
    config = replace(base, mpc=replace(base.mpc, p_h2_max=2.3))
    results = run_scenario(config, verbose=False)
    assert results.metadata['p_h2_max'] == 2.3
    results.plot(tmp_path)
    compare((config, replace(config, controller='plant-mpc')), verbose=False).plot(tmp_path)
    assert limits == [2.3, 2.3]


def test_compare_needs_shared_scenario_and_seed():
    with pytest.raises(ConfigurationError):
        compare((create_config(seed=1), create_config('plant-mpc', seed=2)), verbose=False)


def test_compare_exports_table(tmp_path):
    report = compare((create_config(), create_config('plant-mpc')), verbose=False)
    assert list(report.table.index) == ['hold', 'plant-mpc']
    path = report.export(tmp_path)
    assert path.name == 'flat_comparison.csv'
    assert (tmp_path / 'flat_plant-mpc.csv').exists()
    assert report.aligned().shape[0] == 21
