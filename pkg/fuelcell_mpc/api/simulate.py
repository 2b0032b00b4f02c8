"""
Closed-loop simulation API
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..analysis.metrics import PRESSURE_LIMIT, calculate_metrics, event_metrics
from ..analysis.plots import emit_plots
from ..config import RunConfig
from ..control.mpc import (
    ControllerState, MpcConfig, StepDecision, audit_steps, baseline_plant_mpc_step, condense, control_step
)
from ..control.qp import QpSettings, QpSolver
from ..control.ssm import assemble
from ..core.engine import SimulationEngine
from ..core.events import MeasurementEvent
from ..core.plant import FuelCellPlant, PlantInputs, PlantParams, PlantState, equilibrium_state
from ..exceptions import ConfigurationError
from ..model.autodiff import Jacobian
from ..model.network import NetworkWeights, Scaler, load_weights
from ..version import describe

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = '%.6f'


@dataclass
class SimulationResults:
    """Container for one closed-loop run"""
    trace: pd.DataFrame
    metrics: Dict[str, float]
    events: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def controller(self) -> str:
        return self.metadata.get('controller', 'controller')

    @property
    def scenario(self) -> str:
        return self.metadata.get('scenario', 'scenario')

    def summary(self) -> str:
        """Readable summary of the run"""
        m = self.metrics
        lines = [
            f"=== {self.scenario} / {self.controller} ===",
            f"Overshoot: {m['overshoot']:.3f} V",
            f"Settling time: {m['settling_time']:.1f} s",
            f"Max H2 pressure: {m['max_p_h2']:.4f} atm",
            f"IAE: {m['iae']:.3f} V s",
            f"Pressure violations: {m['violations']} ({m['violation_duration']:.1f} s)",
            f"Degraded steps: {m['degraded_steps']}",
            "=" * 24,
        ]
        return "\n".join(lines)

    def plot(self, output_dir: Union[str, Path]) -> List[Path]:
        return emit_plots({self.controller: self.trace}, output_dir, self.scenario,
                          reference=self.metadata.get('reference', 48.0),
                          p_limit=self.metadata.get('p_h2_max', PRESSURE_LIMIT))

    def export(self, output_dir: Union[str, Path]) -> Path:
        """Write `<scenario>_<controller>.csv` plus its metadata sidecar"""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        path = output_dir / f"{self.scenario}_{self.controller}.csv"
        write_trace(self.trace, path)
        sidecar = {**self.metadata, 'metrics': _jsonable(self.metrics)}
        path.with_name(path.stem + '.meta.json').write_text(json.dumps(sidecar, indent=2, sort_keys=True) + '\n')
        logger.info("wrote trace to %s", path)
        return path


def write_trace(trace: pd.DataFrame, path: Union[str, Path]):
    """Fixed six-decimal rendering so equal runs give identical bytes"""
    trace.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


def read_trace(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"trace file not found: {path}")
    return pd.read_csv(path)


def _jsonable(values: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in values.items():
        if isinstance(value, (np.floating, float)):
            out[key] = None if not np.isfinite(value) else float(value)
        elif isinstance(value, np.integer):
            out[key] = int(value)
        else:
            out[key] = value
    return out


def hold_step(ctrl: ControllerState, config: MpcConfig, current: float, prev_current: float,
              measurement) -> StepDecision:
    """Controller disabled: keep the flows"""
    jac = Jacobian.zeros()
    x_init = np.array([measurement.v_fc, measurement.p_h2, current - prev_current, ctrl.q_h2, ctrl.q_air])
    predicted = condense(assemble(jac), config.h_p, config.h_u).states(x_init, np.zeros(2 * config.h_u))
    ctrl.last_increment = np.zeros(2)
    ctrl.step += 1
    return StepDecision(
        q_h2=ctrl.q_h2, q_air=ctrl.q_air, increment=np.zeros(2), predicted=predicted,
        slack=np.zeros(config.h_p), status='hold', iterations=0, solve_ms=0.0, degraded=False, jacobian=jac
    )


def make_controller(
    kind: str,
    ctrl: ControllerState,
    config: MpcConfig,
    params: PlantParams,
    weights: Optional[NetworkWeights] = None,
    scaler: Optional[Scaler] = None
):
    """Controller callable for the engine"""
    solver = QpSolver(QpSettings(tol=config.tol, max_iter=config.max_iter))

    if kind == 'nn-mpc':
        if weights is None or scaler is None:
            raise ConfigurationError("nn-mpc needs network weights")

        def controller(event: MeasurementEvent, plant_state: PlantState) -> StepDecision:
            return control_step(ctrl, event.measurement, event.current, event.prev_current,
                                weights, scaler, config, solver)
    elif kind == 'plant-mpc':
        def controller(event: MeasurementEvent, plant_state: PlantState) -> StepDecision:
            return baseline_plant_mpc_step(ctrl, event.measurement, event.current, event.prev_current,
                                           plant_state, params, config, solver)
    elif kind == 'hold':
        def controller(event: MeasurementEvent, plant_state: PlantState) -> StepDecision:
            return hold_step(ctrl, config, event.current, event.prev_current, event.measurement)
    else:
        raise ConfigurationError(f"unknown controller kind {kind!r}")
    return controller


def run_scenario(
    config: RunConfig,
    weights: Optional[NetworkWeights] = None,
    scaler: Optional[Scaler] = None,
    verbose: bool = True
) -> SimulationResults:
    """
    Run one scenario in closed loop

    The plant starts at the equilibrium of the scenario's initial flows and
    first current. Weights are read from `config.weights_path` when the
    network controller runs without explicit weights.

    Args:
        config: Run configuration
        weights: Network weights, optional
        scaler: Network scaler, optional
        verbose: Show progress bar

    Returns:
        SimulationResults with trace, metrics and metadata
    """
    scenario = config.scenario
    mpc = replace_reference(config.mpc, scenario.reference)
    if config.controller == 'nn-mpc' and weights is None:
        config.check_files()
        weights, scaler = load_weights(config.weights_path)

    currents = scenario.currents(mpc.dt)
    q_h2, q_air = scenario.initial_flows
    start = equilibrium_state(PlantInputs(q_h2, q_air, currents[0]), config.plant)
    plant = FuelCellPlant(config.plant, start, config.simulation_noise,
                          np.random.default_rng(config.simulation_seed))
    ctrl = ControllerState(q_h2=q_h2, q_air=q_air)
    controller = make_controller(config.controller, ctrl, mpc, config.plant, weights, scaler)

    engine = SimulationEngine(
        plant, controller, currents, mpc_config=mpc, record_timing=config.record_timing,
        audit_steps=audit_steps(len(currents), config.slack_audit_steps, config.simulation_seed),
        verbose=verbose, name=f"{scenario.name}/{config.controller}"
    )
    trace = engine.run()

    metadata = {
        'scenario': scenario.name,
        'controller': config.controller,
        'reference': scenario.reference,
        'p_h2_max': mpc.p_h2_max,
        'seed': config.simulation_seed,
        'dt': mpc.dt,
        'config_hash': config.config_hash(),
        'generator': describe(),
        'slack_audit': [asdict(record) for record in engine.audits],
    }
    return SimulationResults(
        trace=trace,
        metrics=calculate_metrics(trace, scenario.reference, mpc.p_h2_max),
        events=event_metrics(trace, scenario.reference),
        metadata=metadata
    )


def replace_reference(mpc: MpcConfig, reference: float) -> MpcConfig:
    return mpc if mpc.reference == reference else replace(mpc, reference=reference)


@dataclass
class ComparisonReport:
    results: Dict[str, SimulationResults]

    @property
    def table(self) -> pd.DataFrame:
        """One row per controller"""
        return pd.DataFrame({name: r.metrics for name, r in self.results.items()}).T

    def aligned(self) -> pd.DataFrame:
        """Traces side by side on the common time axis"""
        frames = {name: r.trace.set_index('t') for name, r in self.results.items()}
        return pd.concat(frames, axis=1)

    def summary(self) -> str:
        return self.table.to_string(float_format=lambda x: f"{x:.4f}")

    def plot(self, output_dir: Union[str, Path]) -> List[Path]:
        first = next(iter(self.results.values()))
        return emit_plots({name: r.trace for name, r in self.results.items()}, output_dir, first.scenario,
                          reference=first.metadata.get('reference', 48.0),
                          p_limit=first.metadata.get('p_h2_max', PRESSURE_LIMIT))

    def export(self, output_dir: Union[str, Path]) -> Path:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        for result in self.results.values():
            result.export(output_dir)
        first = next(iter(self.results.values()))
        path = output_dir / f"{first.scenario}_comparison.csv"
        self.table.to_csv(path, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
        return path


def compare(
    configs: Tuple[RunConfig, RunConfig],
    weights: Optional[NetworkWeights] = None,
    scaler: Optional[Scaler] = None,
    verbose: bool = True
) -> ComparisonReport:
    """Run two controllers on the same scenario and seed"""
    first, second = configs
    if first.scenario != second.scenario or first.simulation_seed != second.simulation_seed:
        raise ConfigurationError("compared runs must share scenario and seed")
    results = {}
    for config in configs:
        name = config.controller if config.controller not in results else f"{config.controller}-2"
        results[name] = run_scenario(config, weights, scaler, verbose)
    return ComparisonReport(results)
