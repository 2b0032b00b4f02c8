"""
Controller tuning
"""

from .tuning import tune_mpc, tuning_score

__all__ = ['tune_mpc', 'tuning_score']
