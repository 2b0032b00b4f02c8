"""
Main API
"""

from .simulate import ComparisonReport, SimulationResults, compare, run_scenario
from .pipeline import run_datagen, run_training

__all__ = [
    'run_scenario',
    'compare',
    'SimulationResults',
    'ComparisonReport',
    'run_datagen',
    'run_training',
]
