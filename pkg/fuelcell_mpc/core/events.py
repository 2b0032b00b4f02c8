"""
Event system for the closed-loop simulation engine (internal use)
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .plant import Measurement


class EventType(Enum):
    MEASUREMENT = "MEASUREMENT"
    DECISION = "DECISION"
    ACTUATION = "ACTUATION"


@dataclass
class Event:
    """Base event class"""
    t: float
    step: int
    type: EventType = field(init=False)


@dataclass
class MeasurementEvent(Event):
    """Sensor reading at the start of a control period"""
    measurement: Measurement
    v_true: float
    p_true: float
    current: float
    prev_current: float

    def __post_init__(self):
        self.type = EventType.MEASUREMENT


@dataclass
class DecisionEvent(Event):
    """Controller output for the coming period"""
    decision: object
    current: float

    def __post_init__(self):
        self.type = EventType.DECISION


@dataclass
class ActuationEvent(Event):
    """Flows and load applied to the plant over one period"""
    q_h2: float
    q_air: float
    current: float
    dt: Optional[float] = None

    def __post_init__(self):
        self.type = EventType.ACTUATION
