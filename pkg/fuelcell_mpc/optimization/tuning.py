"""
Controller weight tuning
"""

import logging
from dataclasses import replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
import optuna

from ..api.simulate import SimulationResults, run_scenario
from ..config import RunConfig
from ..exceptions import FuelCellMpcError
from ..model.network import NetworkWeights, Scaler

logger = logging.getLogger(__name__)

DEFAULT_SPACE = {
    'q_weight': (1.0, 100.0),
    'r_weight': (1e-4, 1e-1),
    'h_p': (10, 30),
    'h_u': (2, 8),
}


def tuning_score(results: SimulationResults, violation_penalty: float = 100.0) -> float:
    """IAE plus start-up overshoot plus a penalty per second spent above the pressure limit"""
    m = results.metrics
    return float(m['iae'] + m['overshoot'] + violation_penalty * m['violation_duration'])


def tune_mpc(
    config: RunConfig,
    n_trials: int = 30,
    space: Optional[Dict[str, Tuple[float, float]]] = None,
    weights: Optional[NetworkWeights] = None,
    scaler: Optional[Scaler] = None,
    violation_penalty: float = 100.0,
    n_jobs: int = 1,
    verbose: bool = False
) -> Dict[str, Any]:
    """
    Tune MPC weights and horizons with Optuna

    Args:
        config: Run configuration; controller and scenario are used as given
        n_trials: Number of optimization trials
        space: Search ranges for q_weight, r_weight (log scale), h_p, h_u
        weights: Network weights for the network controller
        scaler: Network scaler
        violation_penalty: Score per second of pressure-limit violation
        n_jobs: Number of parallel trials
        verbose: Show optimization progress

    Returns:
        Best parameters, best score, the study and the re-run best result
    """
    space = {**DEFAULT_SPACE, **(space or {})}

    def apply(params: Dict[str, Any]) -> RunConfig:
        h_p = int(params['h_p'])
        mpc = replace(config.mpc, q_weight=float(params['q_weight']),
                      r_weight=(float(params['r_weight']),) * 2,
                      h_p=h_p, h_u=min(int(params['h_u']), h_p))
        return replace(config, mpc=mpc, slack_audit_steps=0)

    def objective(trial):
        params = {
            'q_weight': trial.suggest_float('q_weight', *space['q_weight'], log=True),
            'r_weight': trial.suggest_float('r_weight', *space['r_weight'], log=True),
            'h_p': trial.suggest_int('h_p', *space['h_p']),
            'h_u': trial.suggest_int('h_u', *space['h_u']),
        }
        try:
            return tuning_score(run_scenario(apply(params), weights, scaler, verbose=False), violation_penalty)
        except FuelCellMpcError as e:
            logger.warning("trial %d failed: %s", trial.number, e)
            return float('inf')

    sampler = optuna.samplers.TPESampler(seed=config.seed)
    study = optuna.create_study(direction='minimize', sampler=sampler)
    study.optimize(objective, n_trials=n_trials, n_jobs=n_jobs, show_progress_bar=verbose)

    if not np.isfinite(study.best_value):
        raise FuelCellMpcError("every tuning trial failed")
    best_config = apply(study.best_params)
    final_results = run_scenario(best_config, weights, scaler, verbose=False)
    logger.info("best tuning score %.4f with %s", study.best_value, study.best_params)

    return {
        'best_params': study.best_params,
        'best_value': study.best_value,
        'best_mpc': best_config.mpc,
        'study': study,
        'final_results': final_results,
    }
