"""
Receding-horizon controller: condensed soft-constrained QP per control period
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..core.plant import Measurement, PlantInputs, PlantParams, PlantState, plant_output, plant_step
from ..exceptions import ConfigurationError
from ..model.autodiff import Jacobian, jacobian
from ..model.network import NetworkWeights, Scaler
from .qp import STATUS_INFEASIBLE, QpProblem, QpSettings, QpSolution, QpSolver
from .ssm import P, QAIR, QH2, STATE_COUPLINGS, V, StateSpaceModel, assemble

logger = logging.getLogger(__name__)

# Clamp corrections larger than this are reported as solver anomalies
CLAMP_REPORT_THRESHOLD = 1e-5


@dataclass
class MpcConfig:
    """Horizons, weights and limits of the controller"""
    h_p: int = 20
    h_u: int = 5
    q_weight: float = 10.0
    r_weight: Tuple[float, float] = (1e-3, 1e-3)
    rho: float = 1e5
    reference: float = 48.0
    u_min: Tuple[float, float] = (-40.0, -40.0)
    u_max: Tuple[float, float] = (20.0, 20.0)
    du_min: Tuple[float, float] = (-np.inf, -np.inf)
    du_max: Tuple[float, float] = (np.inf, np.inf)
    q_h2_bounds: Tuple[float, float] = (100.0, 400.0)
    q_air_bounds: Tuple[float, float] = (300.0, 700.0)
    p_h2_max: float = 2.5
    dt: float = 0.5
    state_coupling: str = 'identity'
    tol: float = 1e-6
    max_iter: int = 4000
    dump_dir: Optional[str] = None

    def __post_init__(self):
        for name in ('r_weight', 'u_min', 'u_max', 'du_min', 'du_max', 'q_h2_bounds', 'q_air_bounds'):
            setattr(self, name, tuple(float(x) for x in getattr(self, name)))
        if self.h_p < 1 or self.h_u < 1 or self.h_u > self.h_p:
            raise ConfigurationError(f"horizons must satisfy 1 <= h_u <= h_p, got h_u={self.h_u}, h_p={self.h_p}")
        if not self.q_weight > 0 or min(self.r_weight) < 0:
            raise ConfigurationError("q_weight must be > 0 and r_weight >= 0")
        if not self.rho > 0:
            raise ConfigurationError(f"rho must be > 0, got {self.rho}")
        if self.rho < 1e3 * max(self.q_weight, *self.r_weight):
            logger.warning("slack penalty rho=%g is less than 1000x the tracking and move weights", self.rho)
        if any(lo > 0 or hi < 0 or lo > hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ConfigurationError("increment bounds must bracket zero")
        if any(lo > 0 or hi < 0 for lo, hi in zip(self.du_min, self.du_max)):
            raise ConfigurationError("increment-change bounds must bracket zero")
        for name in ('q_h2_bounds', 'q_air_bounds'):
            lo, hi = getattr(self, name)
            if not 0 <= lo < hi:
                raise ConfigurationError(f"{name} must satisfy 0 <= low < high")
        if not (self.p_h2_max > 0 and self.dt > 0):
            raise ConfigurationError("p_h2_max and dt must be > 0")
        if self.state_coupling not in STATE_COUPLINGS:
            raise ConfigurationError(f"state_coupling must be one of {STATE_COUPLINGS}")

    @property
    def has_du_bounds(self) -> bool:
        return bool(np.any(np.isfinite(self.du_min)) or np.any(np.isfinite(self.du_max)))

    @property
    def flow_lows(self) -> np.ndarray:
        return np.array([self.q_h2_bounds[0], self.q_air_bounds[0]])

    @property
    def flow_highs(self) -> np.ndarray:
        return np.array([self.q_h2_bounds[1], self.q_air_bounds[1]])

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'MpcConfig':
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown mpc settings: {sorted(unknown)}")
        values = {k: (tuple(float(x) for x in v) if isinstance(v, list) else v) for k, v in values.items()}
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        for k, v in values.items():
            if isinstance(v, tuple):
                values[k] = [x if np.isfinite(x) else ('inf' if x > 0 else '-inf') for x in v]
        return values


@dataclass
class ControllerState:
    """Mutable per-run controller memory"""
    q_h2: float
    q_air: float
    last_increment: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_solution: Optional[QpSolution] = None
    step: int = 0

    @property
    def flows(self) -> np.ndarray:
        return np.array([self.q_h2, self.q_air])


@dataclass
class StepDecision:
    """Outcome of one control period"""
    q_h2: float
    q_air: float
    increment: np.ndarray
    predicted: np.ndarray
    slack: np.ndarray
    status: str
    iterations: int
    solve_ms: float
    degraded: bool
    jacobian: Jacobian
    problem: Optional[QpProblem] = None
    solution: Optional[QpSolution] = None

    @property
    def slack_max(self) -> float:
        return float(np.max(self.slack, initial=0.0))


@dataclass
class Condensed:
    """Predicted states as phi @ x0 + gamma @ u over the horizon"""
    phi: np.ndarray    # (h_p, 5, 5)
    gamma: np.ndarray  # (h_p, 5, 2*h_u)

    def states(self, x0: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.phi @ x0 + self.gamma @ u


def condense(model: StateSpaceModel, h_p: int, h_u: int) -> Condensed:
    """Eliminate states; increments after h_u are zero"""
    phi = np.empty((h_p, 5, 5))
    gamma = np.zeros((h_p, 5, 2 * h_u))
    power = np.eye(5)
    for k in range(h_p):
        # Row k holds x[k+1]
        gamma[k] = model.a @ gamma[k - 1] if k else 0.0
        if k < h_u:
            gamma[k][:, 2 * k:2 * k + 2] = model.b
        power = model.a @ power
        phi[k] = power
    return Condensed(phi, gamma)


def _row_layout(config: MpcConfig) -> Dict[str, slice]:
    n_u = 2 * config.h_u
    layout = {}
    start = 0
    for name, size in (('increment', n_u), ('flow', n_u), ('pressure', config.h_p), ('slack', config.h_p)):
        layout[name] = slice(start, start + size)
        start += size
    if config.has_du_bounds:
        layout['du'] = slice(start, start + n_u)
    return layout


def build_qp(model: StateSpaceModel, config: MpcConfig, x_init: np.ndarray,
             u_prev: Optional[np.ndarray] = None) -> QpProblem:
    """
    Condensed MPC problem over z = [u[0..h_u-1], eps[1..h_p]]

    Cost: q * sum (v[k] - r)^2 + sum u' R u + rho * sum eps^2.
    Rows: increment bounds, flow bounds on the propagated q states,
    soft pressure limit p[k] - eps[k] <= p_max, eps >= 0 and, when
    configured, increment-change bounds against u_prev.
    """
    x_init = np.asarray(x_init, dtype=float)
    u_prev = np.zeros(2) if u_prev is None else np.asarray(u_prev, dtype=float)
    h_p, h_u = config.h_p, config.h_u
    n_u = 2 * h_u
    n = n_u + h_p
    cond = condense(model, h_p, h_u)
    free = cond.phi @ x_init

    gamma_v = cond.gamma[:, V, :]
    H = np.zeros((n, n))
    g = np.zeros(n)
    H[:n_u, :n_u] = 2.0 * (config.q_weight * gamma_v.T @ gamma_v + np.diag(np.tile(config.r_weight, h_u)))
    g[:n_u] = 2.0 * config.q_weight * gamma_v.T @ (free[:, V] - config.reference)
    H[n_u:, n_u:] = 2.0 * config.rho * np.eye(h_p)

    rows, lows, highs = [], [], []

    increment = np.zeros((n_u, n))
    increment[:, :n_u] = np.eye(n_u)
    rows.append(increment)
    lows.append(np.tile(config.u_min, h_u))
    highs.append(np.tile(config.u_max, h_u))

    # Flows stop changing after h_u, so steps 1..h_u cover the whole horizon
    flow = np.zeros((n_u, n))
    flow_low, flow_high = np.empty(n_u), np.empty(n_u)
    for k in range(h_u):
        for j, state in enumerate((QH2, QAIR)):
            flow[2 * k + j, :n_u] = cond.gamma[k, state, :]
            flow_low[2 * k + j] = config.flow_lows[j] - free[k, state]
            flow_high[2 * k + j] = config.flow_highs[j] - free[k, state]
    rows.append(flow)
    lows.append(flow_low)
    highs.append(flow_high)

    pressure = np.zeros((h_p, n))
    pressure[:, :n_u] = cond.gamma[:, P, :]
    pressure[:, n_u:] = -np.eye(h_p)
    rows.append(pressure)
    lows.append(np.full(h_p, -np.inf))
    highs.append(config.p_h2_max - free[:, P])

    slack = np.zeros((h_p, n))
    slack[:, n_u:] = np.eye(h_p)
    rows.append(slack)
    lows.append(np.zeros(h_p))
    highs.append(np.full(h_p, np.inf))

    if config.has_du_bounds:
        du = np.zeros((n_u, n))
        du[:, :n_u] = np.eye(n_u) - np.eye(n_u, k=-2)
        du_low = np.tile(config.du_min, h_u)
        du_high = np.tile(config.du_max, h_u)
        du_low[:2] += u_prev
        du_high[:2] += u_prev
        rows.append(du)
        lows.append(du_low)
        highs.append(du_high)

    return QpProblem(H, g, np.vstack(rows), np.concatenate(lows), np.concatenate(highs))


def harden(problem: QpProblem, config: MpcConfig) -> QpProblem:
    """Same problem with every slack pinned to zero"""
    rows = _row_layout(config)['slack']
    u = problem.u.copy()
    u[rows] = 0.0
    return QpProblem(problem.H, problem.g, problem.G, problem.l, u)


@dataclass
class SlackAuditRecord:
    step: int
    hard_feasible: bool
    soft_slack_max: float
    passed: bool


def slack_audit(problem: QpProblem, soft: QpSolution, config: MpcConfig, step: int = 0,
                solver: Optional[QpSolver] = None, slack_tol: float = 1e-4) -> SlackAuditRecord:
    """Whenever the hard-constrained problem is feasible the soft solution must carry (almost) no slack"""
    solver = solver or QpSolver(QpSettings(tol=config.tol, max_iter=config.max_iter))
    hard = solver.solve(harden(problem, config))
    slack_max = float(np.max(soft.z[2 * config.h_u:], initial=0.0))
    passed = (not hard.solved) or slack_max <= slack_tol
    if not passed:
        logger.warning("slack audit failed at step %d: hard problem feasible but slack %.3e", step, slack_max)
    return SlackAuditRecord(step, hard.solved, slack_max, passed)


def _shifted_warm_start(solution: Optional[QpSolution], config: MpcConfig, m: int):
    if solution is None or len(solution.y) != m:
        return None
    n_u = 2 * config.h_u
    u = np.concatenate([solution.z[2:n_u], np.zeros(2)])
    eps = np.concatenate([solution.z[n_u + 1:], np.zeros(1)])
    return np.concatenate([u, eps]), solution.y


def step_with_jacobian(
    ctrl: ControllerState,
    measurement: Measurement,
    current: float,
    prev_current: float,
    jac: Jacobian,
    config: MpcConfig,
    solver: Optional[QpSolver] = None
) -> StepDecision:
    """Shared controller pipeline once the linearization is known; updates ctrl"""
    solver = solver or QpSolver(QpSettings(tol=config.tol, max_iter=config.max_iter))
    model = assemble(jac, config.state_coupling)
    x_init = np.array([measurement.v_fc, measurement.p_h2, current - prev_current, ctrl.q_h2, ctrl.q_air])
    problem = build_qp(model, config, x_init, ctrl.last_increment)
    if config.dump_dir:
        problem.dump(Path(config.dump_dir), prefix=f"step{ctrl.step:05d}")

    started = time.perf_counter()
    solution = solver.solve(problem, _shifted_warm_start(ctrl.last_solution, config, problem.m))
    solve_ms = 1e3 * (time.perf_counter() - started)

    n_u = 2 * config.h_u
    degraded = not solution.solved
    if degraded:
        if solution.status == STATUS_INFEASIBLE:
            logger.error("step %d: QP infeasible, holding flows", ctrl.step)
        else:
            logger.warning("step %d: QP status %s, holding flows", ctrl.step, solution.status)
        proposed = np.zeros(2)
        u_plan = np.zeros(n_u)
        slack = np.zeros(config.h_p)
    else:
        proposed = solution.z[:2]
        u_plan = solution.z[:n_u]
        slack = np.maximum(solution.z[n_u:], 0.0)

    last = ctrl.flows
    increment = np.clip(proposed, config.u_min, config.u_max)
    command = np.clip(last + increment, config.flow_lows, config.flow_highs)
    if np.max(np.abs(command - (last + proposed))) > CLAMP_REPORT_THRESHOLD:
        logger.warning("step %d: solver anomaly, command clamped from %s to %s", ctrl.step, last + proposed, command)
    increment = command - last

    decision = StepDecision(
        q_h2=float(command[0]), q_air=float(command[1]), increment=increment,
        predicted=condense(model, config.h_p, config.h_u).states(x_init, u_plan),
        slack=slack, status=solution.status, iterations=solution.iterations, solve_ms=solve_ms,
        degraded=degraded, jacobian=jac, problem=problem, solution=solution
    )

    ctrl.q_h2, ctrl.q_air = decision.q_h2, decision.q_air
    ctrl.last_increment = increment
    ctrl.last_solution = solution if solution.solved else None
    ctrl.step += 1
    return decision


def control_step(
    ctrl: ControllerState,
    measurement: Measurement,
    current: float,
    prev_current: float,
    weights: NetworkWeights,
    scaler: Scaler,
    config: MpcConfig,
    solver: Optional[QpSolver] = None
) -> StepDecision:
    """
    One network-model control period

    Args:
        ctrl: Controller memory, updated in place
        measurement: Latest (v, p) reading
        current: Load current for the coming period (A)
        prev_current: Load current of the period just finished (A)
        weights: Network weights
        scaler: Network scaler
        config: Controller settings
        solver: Reusable QP solver

    Returns:
        StepDecision with the commanded flows
    """
    if not (np.isfinite(measurement.v_fc) and np.isfinite(measurement.p_h2)):
        raise ConfigurationError("measurement is not finite")
    point = np.array([ctrl.q_h2, ctrl.q_air, current, measurement.v_fc, measurement.p_h2])
    return step_with_jacobian(ctrl, measurement, current, prev_current, jacobian(weights, scaler, point),
                              config, solver)


def plant_jacobian(
    state: PlantState,
    inputs: PlantInputs,
    params: PlantParams,
    dt: float = 0.5,
    flow_step: float = 1.0,
    current_step: float = 0.5,
    pressure_step: float = 1e-4
) -> Jacobian:
    """
    Central finite differences of one plant period around the true state

    Columns for flows and current perturb the applied inputs. The pressure
    column perturbs p_h2; the voltage column perturbs p_o2 and divides by the
    resulting change of the present voltage.
    """
    def after(s: PlantState, u: PlantInputs) -> np.ndarray:
        return np.array(plant_output(plant_step(s, u, params, dt), u, params))

    def shifted_inputs(index: int, delta: float) -> PlantInputs:
        values = [inputs.q_h2, inputs.q_air, inputs.current]
        values[index] = max(values[index] + delta, 0.0)
        return PlantInputs(*values)

    columns = []
    for index, h in ((0, flow_step), (1, flow_step), (2, current_step)):
        hi, lo = shifted_inputs(index, h), shifted_inputs(index, -h)
        span = [hi.q_h2 - lo.q_h2, hi.q_air - lo.q_air, hi.current - lo.current][index]
        columns.append((after(state, hi) - after(state, lo)) / span)

    def shifted_state(field_name: str, delta: float) -> PlantState:
        values = {'p_h2': state.p_h2, 'p_o2': state.p_o2, 'p_n2': state.p_n2}
        values[field_name] = max(values[field_name] + delta, 0.0)
        return PlantState(**values)

    hi, lo = shifted_state('p_o2', pressure_step), shifted_state('p_o2', -pressure_step)
    dv_now = plant_output(hi, inputs, params)[0] - plant_output(lo, inputs, params)[0]
    if abs(dv_now) < 1e-12:
        voltage_column = np.array([1.0, 0.0])
    else:
        voltage_column = (after(hi, inputs) - after(lo, inputs)) / dv_now

    hi, lo = shifted_state('p_h2', pressure_step), shifted_state('p_h2', -pressure_step)
    pressure_column = (after(hi, inputs) - after(lo, inputs)) / (hi.p_h2 - lo.p_h2)

    return Jacobian(np.column_stack(columns + [voltage_column, pressure_column]))


def baseline_plant_mpc_step(
    ctrl: ControllerState,
    measurement: Measurement,
    current: float,
    prev_current: float,
    plant_state: PlantState,
    params: PlantParams,
    config: MpcConfig,
    solver: Optional[QpSolver] = None
) -> StepDecision:
    """Same pipeline as `control_step` but linearized on the plant itself"""
    if not (np.isfinite(measurement.v_fc) and np.isfinite(measurement.p_h2)):
        raise ConfigurationError("measurement is not finite")
    inputs = PlantInputs(ctrl.q_h2, ctrl.q_air, current)
    jac = plant_jacobian(plant_state, inputs, params, config.dt)
    return step_with_jacobian(ctrl, measurement, current, prev_current, jac, config, solver)


def audit_steps(n_steps: int, count: int, seed: int) -> List[int]:
    """Seeded sorted sample of step indices for the slack audit"""
    if count <= 0 or n_steps <= 0:
        return []
    rng = np.random.default_rng(seed)
    return sorted(int(k) for k in rng.choice(n_steps, size=min(count, n_steps), replace=False))
