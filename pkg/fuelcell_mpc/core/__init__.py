"""
Plant model and closed-loop engine components (internal use)
"""

from .plant import (
    FuelCellPlant, Measurement, PlantInputs, PlantParams, PlantState,
    equilibrium_state, plant_output, plant_step
)
from .events import ActuationEvent, DecisionEvent, Event, EventType, MeasurementEvent
from .execution import ActuatorHandler

__all__ = [
    'FuelCellPlant',
    'Measurement',
    'PlantInputs',
    'PlantParams',
    'PlantState',
    'equilibrium_state',
    'plant_output',
    'plant_step',
    'Event',
    'EventType',
    'MeasurementEvent',
    'DecisionEvent',
    'ActuationEvent',
    'ActuatorHandler',
]
