"""
End-to-end checks on the full pipeline: corpus, training and closed loop on the shipped scenarios

These train the default network and are deselected by default; run with `pytest -m slow`.
"""

from dataclasses import replace

import numpy as np
import pytest

from fuelcell_mpc.api.pipeline import run_datagen, run_training
from fuelcell_mpc.api.simulate import run_scenario
from fuelcell_mpc.config import RunConfig, Scenario
from fuelcell_mpc.model.datagen import generate_corpus
from fuelcell_mpc.model.network import forward

pytestmark = pytest.mark.slow

SCENARIOS = ('step', 'ramp_step')
CONTROLLERS = ('nn-mpc', 'plant-mpc')


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp('pipeline')
    config = RunConfig(output_dir=str(out))
    run_datagen(config, verbose=False)
    weights, scaler, report, _ = run_training(config, verbose=False)
    runs = {}
    for name in SCENARIOS:
        for controller in CONTROLLERS:
            run_config = replace(config, scenario=Scenario.load(name), controller=controller)
            runs[name, controller] = run_scenario(run_config, weights, scaler, verbose=False)
    return config, weights, scaler, report, runs


def test_network_quality(pipeline):
    config, weights, scaler, _, _ = pipeline
    held_out = generate_corpus(config.plant, n=500, noise_std=(0.0, 0.0), seed=1234, verbose=False).records
    inputs = held_out[['qh2', 'qair', 'i', 'v0', 'p0']].to_numpy()
    predicted_v = forward(weights, scaler, inputs)[:, 0]
    rmse = float(np.sqrt(np.mean((predicted_v - held_out['v1']) ** 2)))
    assert rmse <= 2 * config.noise_std[0]
    # Mean squared error at least 100x below the variance
    assert rmse ** 2 <= held_out['v1'].var() / 100


def test_commands_never_leave_hard_limits(pipeline):
    *_, runs = pipeline
    for trace in (r.trace for r in runs.values()):
        assert trace['qh2'].between(100.0, 400.0).all()
        assert trace['qair'].between(300.0, 700.0).all()
        for column in ('dqh2', 'dqair'):
            assert trace[column].between(-40.0 - 1e-9, 20.0 + 1e-9).all()


def test_network_controller_settles_after_every_event(pipeline):
    *_, runs = pipeline
    for name in SCENARIOS:
        events = runs[name, 'nn-mpc'].events
        assert events['settling_time'].notna().all()
        assert (events['settling_time'] <= 60.0).all()
        trace = runs[name, 'nn-mpc'].trace
        assert abs(trace['v_true'].iloc[-1] - 48.0) < 0.2


def test_plant_model_controller_has_less_startup_overshoot(pipeline):
    *_, runs = pipeline
    assert runs['step', 'plant-mpc'].metrics['overshoot'] < runs['step', 'nn-mpc'].metrics['overshoot']


def test_pressure_limit(pipeline):
    *_, runs = pipeline
    assert runs['step', 'plant-mpc'].metrics['max_p_h2'] <= 2.5
    nn = runs['step', 'nn-mpc'].metrics
    assert nn['max_p_h2'] <= 2.55
    assert nn['violation_duration'] <= 2.0


def test_slack_audits_pass(pipeline):
    *_, runs = pipeline
    for result in runs.values():
        audits = result.metadata['slack_audit']
        assert len(audits) == 20
        assert all(record['passed'] for record in audits)


def test_equal_seeds_give_identical_files(tmp_path):
    config = RunConfig(seed=3, scenario=Scenario.load('step'))
    config = replace(config, datagen=replace(config.datagen, n_samples=300),
                     train=replace(config.train, epochs=30))
    paths = []
    for run in ('a', 'b'):
        run_config = replace(config, output_dir=str(tmp_path / run))
        _, dataset_path = run_datagen(run_config, verbose=False)
        weights, scaler, _, weights_path = run_training(run_config, verbose=False)
        short = replace(run_config, scenario=Scenario(name='short', duration=20.0,
                                                      knots=((0.0, 125.0), (10.0, 125.0), (10.5, 140.0))))
        trace_path = run_scenario(short, weights, scaler, verbose=False).export(tmp_path / run)
        paths.append((dataset_path, weights_path, trace_path))
    for first, second in zip(*paths):
        assert first.read_bytes() == second.read_bytes()
