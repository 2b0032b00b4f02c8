"""
Discrete state-space model of the stack built from a Jacobian

State [v_fc, p_h2, d_i, q_h2, q_air], input [dq_h2, dq_air], output v_fc.
The network predicts one control period, so the model is already discrete.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..exceptions import ConfigurationError
from ..model.autodiff import Jacobian

STATE_LABELS = ('v_fc', 'p_h2', 'd_i', 'q_h2', 'q_air')
INPUT_LABELS = ('dq_h2', 'dq_air')
STATE_COUPLINGS = ('identity', 'jacobian')

V, P, DI, QH2, QAIR = range(5)


@dataclass(frozen=True)
class StateSpaceModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    state_coupling: str = 'identity'

    def __post_init__(self):
        if np.shape(self.a) != (5, 5) or np.shape(self.b) != (5, 2) or np.shape(self.c) != (1, 5):
            raise ConfigurationError("state-space matrices must be 5x5, 5x2 and 1x5")


def check_structure(model: StateSpaceModel):
    """Raise AssertionError if a fixed entry of (A, B, C) deviates from the model pattern"""
    a, b, c = model.a, model.b, model.c
    fixed_a = {(QH2, QH2): 1.0, (QAIR, QAIR): 1.0}
    if model.state_coupling == 'identity':
        fixed_a.update({(V, V): 1.0, (P, P): 1.0, (V, P): 0.0, (P, V): 0.0})
    free_a = {(V, DI), (P, DI)} | ({(V, V), (V, P), (P, V), (P, P)} if model.state_coupling == 'jacobian' else set())
    for i in range(5):
        for j in range(5):
            if (i, j) in free_a:
                continue
            want = fixed_a.get((i, j), 0.0)
            if a[i, j] != want:
                raise AssertionError(f"A[{i},{j}] = {a[i, j]}, expected {want}")
    fixed_b = {(QH2, 0): 1.0, (QAIR, 1): 1.0}
    for i in (DI, QH2, QAIR):
        for j in range(2):
            want = fixed_b.get((i, j), 0.0)
            if b[i, j] != want:
                raise AssertionError(f"B[{i},{j}] = {b[i, j]}, expected {want}")
    if not np.array_equal(c, np.array([[1.0, 0.0, 0.0, 0.0, 0.0]])):
        raise AssertionError(f"C = {c}, expected [1, 0, 0, 0, 0]")


def assemble(jac: Jacobian, state_coupling: str = 'identity') -> StateSpaceModel:
    """
    Build (A, B, C) from the network Jacobian

    Args:
        jac: 2x5 Jacobian in physical units
        state_coupling: 'identity' keeps unit self-coupling of v and p;
            'jacobian' uses the network's d[v,p]/d[v,p] block instead

    Returns:
        StateSpaceModel with the fixed entries checked
    """
    if state_coupling not in STATE_COUPLINGS:
        raise ConfigurationError(f"state_coupling must be one of {STATE_COUPLINGS}, got {state_coupling!r}")

    a = np.zeros((5, 5))
    if state_coupling == 'identity':
        a[V, V] = a[P, P] = 1.0
    else:
        a[V:P + 1, V:P + 1] = jac.state_block
    a[V:P + 1, DI] = jac.current_column
    a[QH2, QH2] = a[QAIR, QAIR] = 1.0

    b = np.zeros((5, 2))
    b[V:P + 1, :] = jac.flow_block
    b[QH2, 0] = b[QAIR, 1] = 1.0

    c = np.zeros((1, 5))
    c[0, V] = 1.0

    model = StateSpaceModel(a, b, c, state_coupling)
    check_structure(model)
    return model


def predict(model: StateSpaceModel, x0: Sequence[float], inputs: Sequence[Sequence[float]],
            d_i: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Iterate x[k+1] = A x[k] + B u[k]

    The d_i entry of every predicted state is replaced by the anticipated
    current increment for that step (zero when not given).

    Returns:
        States x[1..H], shape (H, 5)
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    horizon = len(inputs)
    if horizon < 1 or inputs.shape[1] != 2:
        raise ConfigurationError(f"inputs must have shape (H>=1, 2), got {inputs.shape}")
    d_i = np.zeros(horizon) if d_i is None else np.asarray(d_i, dtype=float)
    if d_i.shape != (horizon,):
        raise ConfigurationError(f"d_i must have length {horizon}")

    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((horizon, 5))
    for k in range(horizon):
        x = model.a @ x + model.b @ inputs[k]
        x[DI] = d_i[k]
        states[k] = x
    return states
