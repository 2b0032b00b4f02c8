"""
Exception hierarchy shared by all pipeline stages
"""

from typing import Optional


class FuelCellMpcError(Exception):
    """Base class for every error raised by the package"""


class ConfigurationError(FuelCellMpcError, ValueError):
    """Invalid parameters, shapes or config files"""


class InvalidStateError(ConfigurationError):
    """Non-finite plant parameter or state"""


class LimitCurrentError(FuelCellMpcError, ValueError):
    """Load current at or above the stack limiting current"""


class IntegrationError(FuelCellMpcError, ArithmeticError):
    """Plant integration produced a non-finite value"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DataCollectionError(FuelCellMpcError):
    """Too many plant failures while collecting the training corpus"""


class WeightsFormatError(FuelCellMpcError, ValueError):
    """Unreadable, corrupt or incompatible weights file"""


class TrainingDivergedError(FuelCellMpcError, ArithmeticError):
    """Training loss became non-finite"""


class SimulationError(FuelCellMpcError):
    """Closed-loop simulation failure; carries the partial trace"""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 3
EXIT_TRAINING_DIVERGED = 4
EXIT_SIMULATION_FAILURE = 5


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the documented process exit code"""
    if isinstance(error, TrainingDivergedError):
        return EXIT_TRAINING_DIVERGED
    if isinstance(error, (ConfigurationError, WeightsFormatError)):
        return EXIT_CONFIG_ERROR
    if isinstance(error, (SimulationError, IntegrationError, DataCollectionError, LimitCurrentError)):
        return EXIT_SIMULATION_FAILURE
    return 1
