"""
Actuation of controller commands on the plant (internal use)
"""

import logging
from typing import Tuple

import numpy as np

from .events import ActuationEvent
from .plant import FuelCellPlant, PlantInputs, PlantState

logger = logging.getLogger(__name__)


class ActuatorHandler:
    """Applies commanded flows to the plant, saturating at the actuator range"""

    def __init__(self, plant: FuelCellPlant, dt: float,
                 q_h2_range: Tuple[float, float] = (100.0, 400.0),
                 q_air_range: Tuple[float, float] = (300.0, 700.0)):
        self.plant = plant
        self.dt = dt
        self.q_h2_range = q_h2_range
        self.q_air_range = q_air_range

    def apply(self, order: ActuationEvent) -> PlantState:
        """Step the plant one period under the commanded inputs"""
        q_h2 = float(np.clip(order.q_h2, *self.q_h2_range))
        q_air = float(np.clip(order.q_air, *self.q_air_range))
        if q_h2 != order.q_h2 or q_air != order.q_air:
            logger.warning("step %d: actuator saturated (%.3f, %.3f) -> (%.3f, %.3f)",
                           order.step, order.q_h2, order.q_air, q_h2, q_air)
        return self.plant.step(PlantInputs(q_h2, q_air, order.current), order.dt or self.dt)
