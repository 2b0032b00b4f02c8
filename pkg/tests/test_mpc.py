"""
Tests for the receding-horizon controller
"""

import logging

import numpy as np
import pytest

from fuelcell_mpc.control.mpc import (
    ControllerState, MpcConfig, audit_steps, baseline_plant_mpc_step, build_qp, condense, control_step, harden,
    plant_jacobian, slack_audit, step_with_jacobian
)
from fuelcell_mpc.control.qp import QpSettings, QpSolution, QpSolver, solve
from fuelcell_mpc.control.ssm import assemble
from fuelcell_mpc.core.plant import Measurement, PlantInputs, PlantParams, equilibrium_state, plant_output
from fuelcell_mpc.exceptions import ConfigurationError
from fuelcell_mpc.model.autodiff import Jacobian, jacobian
from fuelcell_mpc.model.datagen import SampleBounds
from fuelcell_mpc.model.network import DEFAULT_SHAPE, Scaler, init_weights

SMALL = MpcConfig(h_p=2, h_u=1, r_weight=(1.0, 1.0))


def voltage_gain(b=0.02):
    matrix = np.zeros((2, 5))
    matrix[0, 0] = b
    return Jacobian(matrix)


def test_zero_jacobian_at_reference_needs_no_move():
    problem = build_qp(assemble(Jacobian.zeros()), MpcConfig(), np.array([48.0, 2.0, 0.0, 250.0, 500.0]))
    result = solve(problem)
    assert result.solved
    np.testing.assert_allclose(result.z, 0.0, atol=1e-6)


def test_one_dimensional_closed_form():
    problem = build_qp(assemble(voltage_gain()), SMALL, np.array([47.6, 2.0, 0.0, 250.0, 500.0]))
    result = solve(problem)
    assert result.solved
    # u = 2 q b (r - v0) / (2 q b^2 + R)
    assert result.z[0] == pytest.approx(2 * 10 * 0.02 * 0.4 / (2 * 10 * 0.02 ** 2 + 1.0), abs=1e-5)
    assert result.z[0] == pytest.approx(0.15873, abs=1e-5)
    assert result.z[1] == pytest.approx(0.0, abs=1e-6)


def test_pressure_violation_moves_into_slack():
    problem = build_qp(assemble(Jacobian.zeros()), SMALL, np.array([48.0, 2.6, 0.0, 250.0, 500.0]))
    result = solve(problem)
    assert result.solved
    np.testing.assert_allclose(result.z[2:], [0.1, 0.1], atol=1e-5)


def test_problem_rows_and_sizes():
    config = MpcConfig()
    problem = build_qp(assemble(voltage_gain()), config, np.array([48.0, 2.0, 0.0, 250.0, 500.0]))
    assert problem.n == 2 * config.h_u + config.h_p
    assert problem.m == 4 * config.h_u + 2 * config.h_p
    np.testing.assert_array_equal(problem.l[:2], [-40.0, -40.0])
    np.testing.assert_array_equal(problem.u[:2], [20.0, 20.0])
    # Flow rows are offsets from the held flows
    np.testing.assert_allclose(problem.l[10:12], [-150.0, -200.0])
    np.testing.assert_allclose(problem.u[10:12], [150.0, 200.0])


def test_increment_change_rows_follow_previous_move():
    config = MpcConfig(h_p=4, h_u=2, du_min=(-1.0, -1.0), du_max=(1.0, 1.0))
    problem = build_qp(assemble(voltage_gain()), config, np.array([47.0, 2.0, 0.0, 250.0, 500.0]),
                       u_prev=np.array([0.5, 0.0]))
    assert problem.m == 4 * 2 + 2 * 4 + 2 * 2
    np.testing.assert_allclose(problem.l[-4:], [-0.5, -1.0, -1.0, -1.0])
    np.testing.assert_allclose(problem.u[-4:], [1.5, 1.0, 1.0, 1.0])
    result = solve(problem)
    assert result.solved
    assert result.z[0] <= 1.5 + 1e-5
    assert result.z[2] - result.z[0] <= 1.0 + 1e-5


def test_harden_pins_slack():
    problem = build_qp(assemble(Jacobian.zeros()), SMALL, np.array([48.0, 2.0, 0.0, 250.0, 500.0]))
    hard = harden(problem, SMALL)
    np.testing.assert_array_equal(hard.u[-2:], [0.0, 0.0])
    np.testing.assert_array_equal(hard.l, problem.l)
    assert np.all(problem.u[-2:] == np.inf)


def test_slack_audit_outcomes():
    feasible = build_qp(assemble(Jacobian.zeros()), SMALL, np.array([48.0, 2.0, 0.0, 250.0, 500.0]))
    record = slack_audit(feasible, solve(feasible), SMALL)
    assert record.hard_feasible and record.passed

    infeasible = build_qp(assemble(Jacobian.zeros()), SMALL, np.array([48.0, 2.6, 0.0, 250.0, 500.0]))
    record = slack_audit(infeasible, solve(infeasible), SMALL)
    assert not record.hard_feasible and record.passed
    assert record.soft_slack_max == pytest.approx(0.1, abs=1e-5)

    bogus = QpSolution(np.array([0.0, 0.0, 0.5, 0.5]), np.zeros(feasible.m), 'solved', 0.0, 0.0, 0.0, 0.0, 1)
    assert not slack_audit(feasible, bogus, SMALL).passed


def test_step_updates_controller_state():
    ctrl = ControllerState(250.0, 500.0)
    decision = step_with_jacobian(ctrl, Measurement(47.6, 2.0), 125.0, 125.0, voltage_gain(), SMALL)
    assert not decision.degraded
    assert decision.q_h2 == pytest.approx(250.15873, abs=1e-5)
    assert decision.q_air == pytest.approx(500.0, abs=1e-6)
    assert (ctrl.q_h2, ctrl.q_air) == (decision.q_h2, decision.q_air)
    assert ctrl.step == 1
    assert ctrl.last_solution is decision.solution
    assert decision.predicted.shape == (2, 5)
    assert decision.slack_max == pytest.approx(0.0, abs=1e-6)


def test_commands_respect_flow_bounds():
    ctrl = ControllerState(395.0, 500.0)
    config = MpcConfig()
    for _ in range(3):
        decision = step_with_jacobian(ctrl, Measurement(40.0, 2.0), 125.0, 125.0, voltage_gain(), config)
        assert 100.0 <= decision.q_h2 <= 400.0
        assert 300.0 <= decision.q_air <= 700.0
        assert np.all(decision.increment >= np.array(config.u_min))
        assert np.all(decision.increment <= np.array(config.u_max))
    assert ctrl.q_h2 == pytest.approx(400.0, abs=1e-4)


def test_failed_solve_holds_flows(caplog):
    ctrl = ControllerState(250.0, 500.0)
    solver = QpSolver(QpSettings(max_iter=1, polish=False, tol=1e-12))
    with caplog.at_level(logging.WARNING):
        decision = step_with_jacobian(ctrl, Measurement(47.0, 2.0), 125.0, 125.0, voltage_gain(), SMALL, solver)
    assert decision.degraded
    assert (decision.q_h2, decision.q_air) == (250.0, 500.0)
    np.testing.assert_array_equal(decision.increment, [0.0, 0.0])
    assert ctrl.last_solution is None
    assert 'holding flows' in caplog.text


def test_network_and_plant_paths_share_the_problem():
    weights = init_weights(DEFAULT_SHAPE, np.random.default_rng(0))
    scaler = Scaler(np.array([250.0, 500.0, 125.0, 48.0, 2.0]), np.array([80.0, 120.0, 35.0, 2.0, 0.3]),
                    np.array([48.0, 2.0]), np.array([2.0, 0.3]))
    measurement = Measurement(47.8, 2.05)
    first = control_step(ControllerState(250.0, 500.0), measurement, 130.0, 125.0, weights, scaler, MpcConfig())
    jac = jacobian(weights, scaler, np.array([250.0, 500.0, 130.0, 47.8, 2.05]))
    second = step_with_jacobian(ControllerState(250.0, 500.0), measurement, 130.0, 125.0, jac, MpcConfig())
    for name in ('H', 'g', 'G', 'l', 'u'):
        np.testing.assert_array_equal(getattr(first.problem, name), getattr(second.problem, name))
    assert first.q_h2 == second.q_h2 and first.q_air == second.q_air


def test_non_finite_measurement_is_rejected():
    weights = init_weights(DEFAULT_SHAPE, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        control_step(ControllerState(250.0, 500.0), Measurement(np.nan, 2.0), 125.0, 125.0, weights,
                     Scaler.identity(), MpcConfig())


def test_plant_jacobian_signs():
    params = PlantParams()
    inputs = PlantInputs(250.0, 500.0, 125.0)
    state = equilibrium_state(inputs, params)
    jac = plant_jacobian(state, inputs, params)
    assert np.all(np.isfinite(jac.matrix))
    assert jac.partial('v_fc', 'current') < 0
    assert jac.partial('p_h2', 'current') < 0
    assert jac.partial('p_h2', 'q_h2') > 0
    assert 0 < jac.partial('p_h2', 'p_h2') < 1.01


def test_plant_jacobian_signs_across_operating_range():
    params = PlantParams()
    bounds = SampleBounds()
    rng = np.random.default_rng(17)
    for point in rng.uniform(bounds.lows, bounds.highs, size=(100, 3)):
        inputs = PlantInputs(*point)
        jac = plant_jacobian(equilibrium_state(inputs, params), inputs, params)
        assert jac.partial('v_fc', 'current') < 0, point
        assert jac.partial('p_h2', 'current') < 0, point
        assert jac.partial('p_h2', 'q_h2') > 0, point


def test_shifted_plan_reproduces_prediction_tail():
    model = assemble(Jacobian(np.random.default_rng(6).normal(scale=0.05, size=(2, 5))), state_coupling='jacobian')
    h_p, h_u = 12, 4
    x0 = np.array([47.7, 2.2, 6.0, 240.0, 470.0])
    u = np.random.default_rng(7).normal(scale=5.0, size=2 * h_u)
    states = condense(model, h_p, h_u).states(x0, u)
    shifted = np.concatenate([u[2:], np.zeros(2)])
    tail = condense(model, h_p, h_u).states(states[0], shifted)
    np.testing.assert_allclose(tail[:-1], states[1:], rtol=0, atol=1e-8)


def test_baseline_step_tracks_toward_reference():
    params = PlantParams()
    inputs = PlantInputs(250.0, 500.0, 125.0)
    state = equilibrium_state(inputs, params)
    v, p = plant_output(state, inputs, params)
    ctrl = ControllerState(250.0, 500.0)
    decision = baseline_plant_mpc_step(ctrl, Measurement(v, p), 125.0, 125.0, state, params,
                                       MpcConfig(reference=v + 0.5))
    assert not decision.degraded
    assert decision.predicted[-1, 0] > v


def test_config_dict_round_trip():
    config = MpcConfig(h_p=12, du_min=(-5.0, -np.inf))
    values = config.to_dict()
    assert values['du_min'] == [-5.0, '-inf']
    assert values['du_max'] == ['inf', 'inf']
    restored = MpcConfig.from_dict({k: v for k, v in values.items() if k not in ('du_min', 'du_max')})
    assert restored.h_p == 12
    with pytest.raises(ConfigurationError):
        MpcConfig.from_dict({'horizon': 3})


def test_invalid_configs_are_rejected():
    with pytest.raises(ConfigurationError):
        MpcConfig(h_p=3, h_u=4)
    with pytest.raises(ConfigurationError):
        MpcConfig(u_min=(1.0, -1.0))
    with pytest.raises(ConfigurationError):
        MpcConfig(q_h2_bounds=(400.0, 100.0))
    with pytest.raises(ConfigurationError):
        MpcConfig(state_coupling='full')


def test_audit_steps_are_seeded():
    assert audit_steps(100, 5, seed=1) == audit_steps(100, 5, seed=1)
    steps = audit_steps(100, 5, seed=1)
    assert len(steps) == 5 and steps == sorted(steps) and len(set(steps)) == 5
    assert audit_steps(3, 10, seed=0) == [0, 1, 2]
    assert audit_steps(100, 0, seed=0) == []
