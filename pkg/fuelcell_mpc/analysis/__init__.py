"""
Analysis and reporting tools
"""

from .metrics import calculate_metrics, event_metrics
from .plots import emit_plots, plot_constraints, plot_voltage

__all__ = [
    'calculate_metrics',
    'event_metrics',
    'emit_plots',
    'plot_voltage',
    'plot_constraints'
]
