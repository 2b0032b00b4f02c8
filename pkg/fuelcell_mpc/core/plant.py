"""
Surrogate fuel cell plant: lumped gas balances, static polarization curve and noisy sensors

Stands in for the detailed stack model as the "true system" of every closed-loop
run. Two control volumes (anode hydrogen, cathode oxygen/nitrogen) are fed by
volumetric inflows, drained by Faraday-law consumption and vented through
linear valves. Temperature is constant.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional, Tuple

import numpy as np

from ..exceptions import ConfigurationError, IntegrationError, InvalidStateError, LimitCurrentError

logger = logging.getLogger(__name__)

GAS_CONSTANT = 8.314
FARADAY = 96485.33212
PA_PER_ATM = 101325.0
DEFAULT_SUBSTEP = 0.01

# log() arguments are floored here so a starved electrode still yields a finite voltage
PRESSURE_FLOOR = 1e-6

STATE_FIELDS = ('p_h2', 'p_o2', 'p_n2')


@dataclass(frozen=True)
class PlantParams:
    """Physical parameters of the surrogate stack (SI units unless noted)"""
    n_cells: int = 60
    faraday: float = FARADAY
    gas_constant: float = GAS_CONSTANT
    temperature: float = 343.15
    anode_volume: float = 0.0009
    cathode_volume: float = 0.0015
    ambient_pressure: float = 1.0              # atm
    nernst_e0: float = 1.0457                  # V/cell
    r_ohmic: float = 0.006                     # ohm, whole stack
    act_coeff: float = 2.0                     # V, whole stack
    exchange_current: float = 0.1              # A
    o2_ref_pressure: float = 0.35              # atm
    conc_coeff: float = 0.3                    # V, whole stack
    i_limit: float = 320.0                     # A
    h2_consumption_gain: float = 60 / (2 * FARADAY)
    o2_consumption_gain: float = 60 / (4 * FARADAY)
    outflow_coeff_anode: float = 0.11          # mol/(s atm)
    outflow_coeff_cathode: float = 0.18        # mol/(s atm)
    o2_fraction_air: float = 0.21

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise InvalidStateError(f"plant parameter {f.name} is not finite: {value}")
            if value <= 0:
                raise ConfigurationError(f"plant parameter {f.name} must be > 0, got {value}")
        if not 0 < self.o2_fraction_air < 1:
            raise ConfigurationError(f"o2_fraction_air must lie in (0, 1), got {self.o2_fraction_air}")

    @property
    def lpm_to_mol(self) -> float:
        """mol/s carried by 1 lpm of ideal gas at plant temperature and ambient pressure"""
        return self.ambient_pressure * PA_PER_ATM * 1e-3 / 60.0 / (self.gas_constant * self.temperature)

    @property
    def anode_gain(self) -> float:
        """atm per mol accumulated in the anode volume"""
        return self.gas_constant * self.temperature / (self.anode_volume * PA_PER_ATM)

    @property
    def cathode_gain(self) -> float:
        """atm per mol accumulated in the cathode volume"""
        return self.gas_constant * self.temperature / (self.cathode_volume * PA_PER_ATM)

    @property
    def nernst_slope(self) -> float:
        """RT/2F in V per cell"""
        return self.gas_constant * self.temperature / (2 * self.faraday)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, float]) -> 'PlantParams':
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown plant parameters: {sorted(unknown)}")
        return cls(**values)


@dataclass(frozen=True)
class PlantState:
    """Partial pressures in atm"""
    p_h2: float
    p_o2: float
    p_n2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_h2, self.p_o2, self.p_n2], dtype=float)

    @classmethod
    def from_array(cls, values) -> 'PlantState':
        return cls(float(values[0]), float(values[1]), float(values[2]))

    @property
    def p_cathode(self) -> float:
        return self.p_o2 + self.p_n2


@dataclass(frozen=True)
class PlantInputs:
    """Hydrogen and air inflow (lpm) plus the exogenous load current (A)"""
    q_h2: float
    q_air: float
    current: float

    def __post_init__(self):
        for name in ('q_h2', 'q_air', 'current'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidStateError(f"plant input {name} is not finite: {value}")
            if value < 0:
                raise ConfigurationError(f"plant input {name} must be >= 0, got {value}")


@dataclass(frozen=True)
class Measurement:
    """Noisy sensor readings"""
    v_fc: float
    p_h2: float


def _check_state(y: np.ndarray):
    for name, value in zip(STATE_FIELDS, y):
        if not math.isfinite(value):
            raise InvalidStateError(f"plant state {name} is not finite: {value}")


def _rates(y: np.ndarray, inputs: PlantInputs, params: PlantParams) -> np.ndarray:
    """Pressure rates (atm/s) for the state vector [p_h2, p_o2, p_n2]"""
    p_h2, p_o2, p_n2 = np.maximum(y, 0.0)
    p_amb = params.ambient_pressure

    # Anode
    h2_in = params.lpm_to_mol * inputs.q_h2
    h2_used = params.h2_consumption_gain * inputs.current
    h2_out = params.outflow_coeff_anode * max(p_h2 - p_amb, 0.0)
    dp_h2 = params.anode_gain * (h2_in - h2_used - h2_out)

    # Cathode, vented flow split by mole fraction
    air_in = params.lpm_to_mol * inputs.q_air
    p_cathode = p_o2 + p_n2
    vent = params.outflow_coeff_cathode * max(p_cathode - p_amb, 0.0)
    x_o2 = p_o2 / p_cathode if p_cathode > 0 else 0.0
    x_n2 = p_n2 / p_cathode if p_cathode > 0 else 0.0
    o2_used = params.o2_consumption_gain * inputs.current
    dp_o2 = params.cathode_gain * (params.o2_fraction_air * air_in - o2_used - x_o2 * vent)
    dp_n2 = params.cathode_gain * ((1 - params.o2_fraction_air) * air_in - x_n2 * vent)

    return np.array([dp_h2, dp_o2, dp_n2])


def plant_derivative(state: PlantState, inputs: PlantInputs, params: PlantParams) -> PlantState:
    """Time derivative of every partial pressure (atm/s)"""
    y = state.as_array()
    _check_state(y)
    return PlantState.from_array(_rates(y, inputs, params))


def plant_step(
    state: PlantState,
    inputs: PlantInputs,
    params: PlantParams,
    dt: float,
    substep: float = DEFAULT_SUBSTEP
) -> PlantState:
    """
    Advance the plant by dt seconds with fixed-substep RK4

    Args:
        state: Pressures at the start of the interval
        inputs: Flows and current held over the interval
        params: Plant parameters
        dt: Interval length (s)
        substep: Largest allowed RK4 substep (s)

    Returns:
        Pressures at the end of the interval, clamped at zero from below
    """
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    if not substep > 0:
        raise ConfigurationError(f"substep must be > 0, got {substep}")

    y = state.as_array()
    _check_state(y)

    n_sub = max(1, int(math.ceil(dt / substep - 1e-9)))
    h = dt / n_sub

    for _ in range(n_sub):
        k1 = _rates(y, inputs, params)
        k2 = _rates(y + 0.5 * h * k1, inputs, params)
        k3 = _rates(y + 0.5 * h * k2, inputs, params)
        k4 = _rates(y + h * k3, inputs, params)
        y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

        for name, value in zip(STATE_FIELDS, y):
            if not math.isfinite(value):
                raise IntegrationError(f"plant integration produced non-finite {name}", field=name)
        y = np.maximum(y, 0.0)

    return PlantState.from_array(y)


def plant_output(state: PlantState, inputs: PlantInputs, params: PlantParams) -> Tuple[float, float]:
    """
    Stack voltage and anode hydrogen pressure

    Nernst potential minus Tafel activation (oxygen-pressure dependent exchange
    current), ohmic and logarithmic concentration losses. All loss terms vanish
    at zero current.
    """
    current = inputs.current
    if current >= params.i_limit:
        raise LimitCurrentError(f"current {current} A is at or above the limiting current {params.i_limit} A")

    p_h2 = max(state.p_h2, PRESSURE_FLOOR)
    p_o2 = max(state.p_o2, PRESSURE_FLOOR)

    nernst = params.nernst_e0 + params.nernst_slope * math.log(p_h2 * math.sqrt(p_o2))
    i0 = params.exchange_current * p_o2 / params.o2_ref_pressure
    activation = params.act_coeff * math.log1p(current / i0)
    ohmic = params.r_ohmic * current
    concentration = -params.conc_coeff * math.log1p(-current / params.i_limit)

    v_fc = params.n_cells * nernst - activation - ohmic - concentration
    return v_fc, state.p_h2


def measure(
    output: Tuple[float, float],
    noise_std: Tuple[float, float],
    rng: np.random.Generator
) -> Measurement:
    """Add independent zero-mean Gaussian noise to (voltage, pressure)"""
    std = np.asarray(noise_std, dtype=float)
    if std.shape != (2,) or np.any(std < 0):
        raise ConfigurationError(f"noise_std must be two non-negative values, got {noise_std}")
    # Always draw both values so the stream position does not depend on the std
    draws = rng.standard_normal(2)
    return Measurement(v_fc=float(output[0] + std[0] * draws[0]),
                       p_h2=float(output[1] + std[1] * draws[1]))


def equilibrium_state(inputs: PlantInputs, params: PlantParams) -> PlantState:
    """Closed-form flow-balance steady state for constant inputs"""
    p_amb = params.ambient_pressure

    h2_net = params.lpm_to_mol * inputs.q_h2 - params.h2_consumption_gain * inputs.current
    if h2_net > 0:
        p_h2 = p_amb + h2_net / params.outflow_coeff_anode
    elif h2_net == 0:
        p_h2 = p_amb
    else:
        p_h2 = 0.0

    air_in = params.lpm_to_mol * inputs.q_air
    o2_in = params.o2_fraction_air * air_in
    n2_in = air_in - o2_in
    o2_used = params.o2_consumption_gain * inputs.current

    if o2_used >= o2_in:
        # Oxygen starved: nitrogen alone sets the vent flow
        p_o2 = 0.0
        p_n2 = p_amb + n2_in / params.outflow_coeff_cathode if n2_in > 0 else (1 - params.o2_fraction_air) * p_amb
        return PlantState(p_h2, p_o2, p_n2)

    vent = air_in - o2_used
    if vent > 0:
        p_cathode = p_amb + vent / params.outflow_coeff_cathode
        x_o2 = (o2_in - o2_used) / vent
    else:
        p_cathode = p_amb
        x_o2 = params.o2_fraction_air
    return PlantState(p_h2, x_o2 * p_cathode, (1 - x_o2) * p_cathode)


def nominal_operating_point(
    params: Optional[PlantParams] = None,
    power: float = 6000.0,
    voltage: float = 48.0,
    q_h2: float = 250.0,
    q_air: float = 500.0
) -> Tuple[PlantState, PlantInputs]:
    """Equilibrium at the rated load (power / voltage) with the nominal flows"""
    params = params or PlantParams()
    inputs = PlantInputs(q_h2=q_h2, q_air=q_air, current=power / voltage)
    return equilibrium_state(inputs, params), inputs


def calibrate_nernst_e0(
    params: PlantParams,
    target_voltage: float = 48.0,
    inputs: Optional[PlantInputs] = None
) -> float:
    """Per-cell E0 that puts the nominal equilibrium exactly at target_voltage"""
    if inputs is None:
        _, inputs = nominal_operating_point(params, voltage=target_voltage)
    state = equilibrium_state(inputs, params)
    v_now, _ = plant_output(state, inputs, params)
    # Voltage is affine in E0 with slope n_cells
    return params.nernst_e0 + (target_voltage - v_now) / params.n_cells


class FuelCellPlant:
    """Stateful plant instance: one per simulation, not shared between threads"""

    def __init__(
        self,
        params: Optional[PlantParams] = None,
        state: Optional[PlantState] = None,
        noise_std: Tuple[float, float] = (0.05, 0.005),
        rng: Optional[np.random.Generator] = None,
        substep: float = DEFAULT_SUBSTEP
    ):
        self.params = params or PlantParams()
        self.state = state or nominal_operating_point(self.params)[0]
        self.noise_std = tuple(noise_std)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.substep = substep

    def step(self, inputs: PlantInputs, dt: float) -> PlantState:
        self.state = plant_step(self.state, inputs, self.params, dt, self.substep)
        return self.state

    def output(self, current: float) -> Tuple[float, float]:
        # Flows do not enter the static output map
        return plant_output(self.state, PlantInputs(0.0, 0.0, current), self.params)

    def measure(self, current: float) -> Measurement:
        return measure(self.output(current), self.noise_std, self.rng)
