"""
Closed-loop simulation engine (internal use)
"""

import logging
from collections import deque
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..control.mpc import MpcConfig, SlackAuditRecord, StepDecision, slack_audit
from ..control.qp import QpSettings, QpSolver
from ..exceptions import (
    ConfigurationError, IntegrationError, InvalidStateError, LimitCurrentError, SimulationError
)
from .events import ActuationEvent, DecisionEvent, EventType, MeasurementEvent
from .execution import ActuatorHandler
from .plant import FuelCellPlant, PlantState, measure

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['t', 'i', 'v_true', 'v_meas', 'p_true', 'p_meas', 'qh2', 'qair',
                 'dqh2', 'dqair', 'slack', 'status', 'iters', 'ms']

Controller = Callable[[MeasurementEvent, PlantState], StepDecision]


class SimulationEngine:
    """
    Fixed-period closed loop: measure, decide, actuate

    Step k measures the plant output under the current of the period just
    finished, asks the controller for flows and, for every step but the last,
    advances the plant one period with those flows and the new current.
    """

    def __init__(
        self,
        plant: FuelCellPlant,
        controller: Controller,
        currents: np.ndarray,
        mpc_config: Optional[MpcConfig] = None,
        record_timing: bool = False,
        audit_steps: Iterable[int] = (),
        verbose: bool = True,
        name: str = 'simulation'
    ):
        self.plant = plant
        self.controller = controller
        self.currents = np.asarray(currents, dtype=float)
        self.mpc_config = mpc_config or MpcConfig()
        self.dt = self.mpc_config.dt
        self.record_timing = record_timing
        self.audit_steps = set(audit_steps)
        self.verbose = verbose
        self.name = name

        self.actuator = ActuatorHandler(plant, self.dt, self.mpc_config.q_h2_bounds, self.mpc_config.q_air_bounds)
        self.audit_solver = QpSolver(QpSettings(tol=self.mpc_config.tol, max_iter=self.mpc_config.max_iter))

        # Event queue
        self.events = deque()

        # Results storage
        self.rows: List[Dict] = []
        self.audits: List[SlackAuditRecord] = []
        self.decisions: List[StepDecision] = []

    @property
    def n_steps(self) -> int:
        return len(self.currents) - 1

    def run(self) -> pd.DataFrame:
        """Run the loop and return the trace"""
        if len(self.currents) < 1:
            raise ConfigurationError("simulation needs at least one step")

        pbar = tqdm(total=len(self.currents), desc=f"Simulating {self.name}", disable=not self.verbose)
        prev_current = self.currents[0]
        step, t = 0, 0.0
        try:
            for step, current in enumerate(self.currents):
                t = step * self.dt
                self._measure(step, t, current, prev_current)
                while self.events:
                    self._dispatch(self.events.popleft())
                prev_current = current
                pbar.update(1)
        except (IntegrationError, LimitCurrentError, InvalidStateError, ConfigurationError) as e:
            self.events.clear()
            self.rows.append(self._failure_row(t, self.currents[step]))
            logger.error("simulation %s failed at t=%.1f s: %s", self.name, t, e)
            raise SimulationError(f"simulation {self.name} failed at t={t:.1f} s: {e}", trace=self.trace()) from e
        finally:
            pbar.close()

        return self.trace()

    def trace(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TRACE_COLUMNS)

    def _measure(self, step: int, t: float, current: float, prev_current: float):
        v_true, p_true = self.plant.output(prev_current)
        reading = measure((v_true, p_true), self.plant.noise_std, self.plant.rng)
        self.events.append(MeasurementEvent(
            t=t, step=step, measurement=reading, v_true=v_true, p_true=p_true,
            current=current, prev_current=prev_current
        ))

    def _dispatch(self, event):
        if event.type == EventType.MEASUREMENT:
            decision = self.controller(event, self.plant.state)
            self._record(event, decision)
            self.events.append(DecisionEvent(t=event.t, step=event.step, decision=decision, current=event.current))
        elif event.type == EventType.DECISION:
            self._audit(event)
            if event.step < self.n_steps:
                self.events.append(ActuationEvent(
                    t=event.t, step=event.step, q_h2=event.decision.q_h2, q_air=event.decision.q_air,
                    current=event.current, dt=self.dt
                ))
        elif event.type == EventType.ACTUATION:
            self.actuator.apply(event)

    def _record(self, event: MeasurementEvent, decision: StepDecision):
        self.decisions.append(decision)
        self.rows.append({
            't': event.t,
            'i': event.current,
            'v_true': event.v_true,
            'v_meas': event.measurement.v_fc,
            'p_true': event.p_true,
            'p_meas': event.measurement.p_h2,
            'qh2': decision.q_h2,
            'qair': decision.q_air,
            'dqh2': float(decision.increment[0]),
            'dqair': float(decision.increment[1]),
            'slack': decision.slack_max,
            'status': decision.status,
            'iters': int(decision.iterations),
            'ms': decision.solve_ms if self.record_timing else 0.0,
        })

    def _audit(self, event: DecisionEvent):
        decision = event.decision
        if event.step not in self.audit_steps or decision.solution is None or decision.problem is None:
            return
        self.audits.append(slack_audit(decision.problem, decision.solution, self.mpc_config,
                                       step=event.step, solver=self.audit_solver))

    @staticmethod
    def _failure_row(t: float, current: float) -> Dict:
        row = {column: np.nan for column in TRACE_COLUMNS}
        row.update({'t': t, 'i': current, 'status': 'failed', 'iters': 0})
        return row
