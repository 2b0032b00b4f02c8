"""
Tests for controller weight tuning
"""

import pandas as pd
import pytest

from fuelcell_mpc.api.simulate import SimulationResults
from fuelcell_mpc.config import RunConfig, Scenario
from fuelcell_mpc.optimization import tune_mpc, tuning_score


def create_config():
    scenario = Scenario(name='flat', duration=5.0, knots=((0.0, 125.0), (2.0, 125.0), (2.5, 140.0)),
                        initial_flows=(250.0, 500.0))
    return RunConfig(scenario=scenario, controller='plant-mpc', slack_audit_steps=0)


def test_score_penalizes_violations():
    metrics = {'iae': 2.0, 'overshoot': 0.5, 'violation_duration': 1.5}
    results = SimulationResults(pd.DataFrame(), metrics, pd.DataFrame())
    assert tuning_score(results) == pytest.approx(152.5)
    assert tuning_score(results, violation_penalty=0.0) == pytest.approx(2.5)


def test_tuning_is_seeded_and_stays_in_space():
    space = {'h_p': (5, 8), 'h_u': (1, 3)}
    first = tune_mpc(create_config(), n_trials=3, space=space)
    second = tune_mpc(create_config(), n_trials=3, space=space)
    assert first['best_params'] == second['best_params']
    assert len(first['study'].trials) == 3
    best = first['best_mpc']
    assert 5 <= best.h_p <= 8 and 1 <= best.h_u <= 3
    assert 1.0 <= best.q_weight <= 100.0
    assert first['final_results'].metrics['iae'] >= 0.0
