"""
Fuel cell NN-MPC - neural-network-linearised model predictive control of a PEM fuel cell stack
"""

import logging

from .version import __version__

# Import main API functions
from .api import compare, run_datagen, run_scenario, run_training
from .config import RunConfig, Scenario
from .exceptions import FuelCellMpcError
from .optimization.tuning import tune_mpc

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# Configuration
class Config:
    def __init__(self):
        self.progress_bars = True
        self.log_level = "INFO"

    def set_log_level(self, level):
        self.log_level = level.upper()

    def enable_progress_bars(self, enabled):
        self.progress_bars = enabled


settings = Config()


def configure_logging(level=None) -> logging.Logger:
    """Attach one stream handler to the package logger at `level` (default `settings.log_level`)"""
    logger = logging.getLogger(__name__)
    logger.setLevel((level or settings.log_level).upper())
    if not any(getattr(h, '_fuelcell_mpc', False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._fuelcell_mpc = True
        logger.addHandler(handler)
    return logger


# Expose main functions at package level
__all__ = [
    '__version__',
    'run_datagen',
    'run_training',
    'run_scenario',
    'compare',
    'tune_mpc',
    'RunConfig',
    'Scenario',
    'FuelCellMpcError',
    'settings',
    'configure_logging',
]
