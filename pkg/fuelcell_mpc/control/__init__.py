"""
Model predictive control: state-space assembly, QP solver, controller
"""

from .ssm import StateSpaceModel, assemble, predict
from .qp import QpProblem, QpSettings, QpSolution, QpSolver, solve
from .mpc import (
    ControllerState, MpcConfig, StepDecision, baseline_plant_mpc_step, build_qp,
    control_step, harden, plant_jacobian, slack_audit
)

__all__ = [
    'StateSpaceModel', 'assemble', 'predict',
    'QpProblem', 'QpSettings', 'QpSolution', 'QpSolver', 'solve',
    'ControllerState', 'MpcConfig', 'StepDecision', 'baseline_plant_mpc_step', 'build_qp',
    'control_step', 'harden', 'plant_jacobian', 'slack_audit',
]
