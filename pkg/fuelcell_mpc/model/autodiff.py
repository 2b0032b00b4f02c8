"""
Forward-mode automatic differentiation of the state-update network
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
import pandas as pd

from ..exceptions import ConfigurationError
from .network import NetworkWeights, Scaler

JACOBIAN_ROWS = ('v_fc', 'p_h2')
JACOBIAN_COLUMNS = ('q_h2', 'q_air', 'current', 'v_fc', 'p_h2')


class Dual:
    """
    Dual number value + derivative*eps with eps**2 = 0

    Value and derivative may be numpy arrays of equal shape, so one pass
    carries a whole layer.
    """
    __slots__ = ('value', 'deriv')
    # Make numpy defer binary operators (W @ dual, array + dual) to this class
    __array_ufunc__ = None

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    @staticmethod
    def _parts(other):
        if isinstance(other, Dual):
            return other.value, other.deriv
        return other, 0.0

    def __add__(self, other):
        value, deriv = self._parts(other)
        return Dual(self.value + value, self.deriv + deriv)

    __radd__ = __add__

    def __sub__(self, other):
        value, deriv = self._parts(other)
        return Dual(self.value - value, self.deriv - deriv)

    def __rsub__(self, other):
        value, deriv = self._parts(other)
        return Dual(value - self.value, deriv - self.deriv)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __mul__(self, other):
        value, deriv = self._parts(other)
        return Dual(self.value * value, self.deriv * value + self.value * deriv)

    __rmul__ = __mul__

    def __truediv__(self, other):
        value, deriv = self._parts(other)
        return Dual(self.value / value, (self.deriv * value - self.value * deriv) / (value * value))

    def __matmul__(self, other):
        # Constant right operand only
        return Dual(self.value @ other, self.deriv @ other)

    def __rmatmul__(self, other):
        return Dual(other @ self.value, other @ self.deriv)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"


def relu(x: Union[Dual, np.ndarray, float]):
    """max(0, x); derivative 0 for x <= 0 and 1 for x > 0"""
    if isinstance(x, Dual):
        active = np.asarray(x.value) > 0
        return Dual(np.where(active, x.value, 0.0), np.where(active, x.deriv, 0.0))
    return np.maximum(x, 0.0)


def dual_forward(weights: NetworkWeights, scaler: Scaler, point: np.ndarray, tangent: np.ndarray) -> Dual:
    """One forward-mode pass in physical units; tangent is a direction in input units"""
    point = np.asarray(point, dtype=float)
    tangent = np.asarray(tangent, dtype=float)
    if point.shape != (weights.shape[0],) or tangent.shape != point.shape:
        raise ConfigurationError(f"point and tangent must have shape ({weights.shape[0]},)")
    if not np.all(np.isfinite(point)):
        raise ConfigurationError("linearization point is not finite")

    z = Dual(scaler.scale_inputs(point), tangent / scaler.in_scale)
    last = len(weights.layers) - 1
    for i, (w, b) in enumerate(weights.layers):
        z = w @ z + b
        if i < last:
            z = relu(z)
    return Dual(scaler.unscale_outputs(z.value), z.deriv * scaler.out_scale)


def directional_derivative(weights: NetworkWeights, scaler: Scaler, point: np.ndarray,
                           direction: np.ndarray) -> np.ndarray:
    return dual_forward(weights, scaler, point, direction).deriv


@dataclass(frozen=True)
class Jacobian:
    """2x5 partials of [v_next, p_next] with respect to [q_h2, q_air, current, v, p], physical units"""
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (2, 5):
            raise ConfigurationError(f"Jacobian must be 2x5, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ConfigurationError("Jacobian contains non-finite entries")
        matrix.setflags(write=False)
        object.__setattr__(self, 'matrix', matrix)

    def partial(self, row: str, column: str) -> float:
        return float(self.matrix[JACOBIAN_ROWS.index(row), JACOBIAN_COLUMNS.index(column)])

    @property
    def flow_block(self) -> np.ndarray:
        """d[v,p]/d[q_h2,q_air]"""
        return self.matrix[:, 0:2]

    @property
    def current_column(self) -> np.ndarray:
        return self.matrix[:, 2]

    @property
    def state_block(self) -> np.ndarray:
        """d[v,p]/d[v,p] of the previous step"""
        return self.matrix[:, 3:5]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, index=list(JACOBIAN_ROWS), columns=list(JACOBIAN_COLUMNS))

    @classmethod
    def zeros(cls) -> 'Jacobian':
        return cls(np.zeros((2, 5)))


def jacobian(weights: NetworkWeights, scaler: Scaler, point: np.ndarray) -> Jacobian:
    """
    Network Jacobian at an operating point by five forward-mode passes

    At a ReLU kink the x <= 0 branch (derivative 0) is taken, the same
    convention as the backward pass.
    """
    point = np.asarray(point, dtype=float)
    columns = [dual_forward(weights, scaler, point, np.eye(5)[j]).deriv for j in range(5)]
    return Jacobian(np.column_stack(columns))
