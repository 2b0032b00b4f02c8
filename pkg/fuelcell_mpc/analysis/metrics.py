"""
Tracking and constraint metrics computed from a simulation trace
"""

from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

SETTLING_BAND = 0.2     # V
PRESSURE_LIMIT = 2.5    # atm


def calculate_metrics(trace: pd.DataFrame, reference: float = 48.0,
                      p_limit: float = PRESSURE_LIMIT, band: float = SETTLING_BAND) -> Dict[str, float]:
    """Whole-run metrics on the true (noise-free) voltage and pressure"""
    trace = trace[trace['status'] != 'failed']
    metrics = {}
    if trace.empty:
        return {'overshoot': np.nan, 'settling_time': np.nan, 'max_p_h2': np.nan, 'iae': np.nan,
                'violations': 0, 'violation_duration': 0.0, 'degraded_steps': 0, 'max_slack': np.nan}

    dt = sample_period(trace)
    windows = event_windows(trace)
    start, end = windows[0]
    first = trace[(trace['t'] >= start) & (trace['t'] < end)]

    metrics['overshoot'] = overshoot(first['v_true'], reference)
    metrics['settling_time'] = settling_time(first['t'], first['v_true'], reference, band)
    metrics['max_p_h2'] = float(trace['p_true'].max())
    metrics['iae'] = integral_absolute_error(trace['v_true'], reference, dt)
    metrics['violations'], metrics['violation_duration'] = constraint_violations(trace['p_true'], p_limit, dt)
    metrics['degraded_steps'] = int((~trace['status'].isin(['solved', 'hold'])).sum())
    metrics['max_slack'] = float(trace['slack'].max())
    return metrics


def sample_period(trace: pd.DataFrame) -> float:
    if len(trace) < 2:
        return 0.0
    return float(trace['t'].iloc[1] - trace['t'].iloc[0])


def overshoot(voltage: pd.Series, reference: float) -> float:
    """
    Largest excursion past the reference on the side opposite the initial disturbance

    The disturbance side is that of the largest absolute deviation.
    """
    deviation = np.asarray(voltage, dtype=float) - reference
    if deviation.size == 0:
        return np.nan
    side = np.sign(deviation[np.argmax(np.abs(deviation))]) or 1.0
    return float(max(0.0, np.max(-side * deviation)))


def settling_time(t: pd.Series, voltage: pd.Series, reference: float, band: float = SETTLING_BAND) -> float:
    """Time from window start until the voltage stays inside reference +/- band; NaN if it never does"""
    t = np.asarray(t, dtype=float)
    outside = np.abs(np.asarray(voltage, dtype=float) - reference) > band
    if t.size == 0 or outside[-1]:
        return np.nan
    if not outside.any():
        return 0.0
    last_out = np.flatnonzero(outside)[-1]
    return float(t[last_out + 1] - t[0])


def integral_absolute_error(voltage: pd.Series, reference: float, dt: float) -> float:
    return float(np.sum(np.abs(np.asarray(voltage, dtype=float) - reference)) * dt)


def constraint_violations(pressure: pd.Series, p_limit: float, dt: float) -> Tuple[int, float]:
    """Number of samples above the limit and their total duration"""
    count = int((np.asarray(pressure, dtype=float) > p_limit).sum())
    return count, count * dt


def event_times(trace: pd.DataFrame) -> List[float]:
    """Times where the sampled current starts to change after being constant"""
    current = trace['i'].to_numpy(dtype=float)
    t = trace['t'].to_numpy(dtype=float)
    changes = np.flatnonzero(np.diff(current) != 0) + 1
    events = [float(t[k]) for k in changes if k < 2 or current[k - 1] == current[k - 2]]
    return events


def event_windows(trace: pd.DataFrame) -> List[Tuple[float, float]]:
    """[start, end) windows: start-up, then one per current event"""
    starts = [float(trace['t'].iloc[0])] + event_times(trace)
    end = float(trace['t'].iloc[-1]) + 1e-9
    return list(zip(starts, starts[1:] + [end]))


def event_metrics(trace: pd.DataFrame, reference: float = 48.0, band: float = SETTLING_BAND) -> pd.DataFrame:
    """Overshoot, settling time and peak deviation for the start-up and every current event"""
    trace = trace[trace['status'] != 'failed']
    rows = []
    for start, end in event_windows(trace):
        window = trace[(trace['t'] >= start) & (trace['t'] < end)]
        deviation = (window['v_true'] - reference).abs()
        rows.append({
            'start': start,
            'end': min(end, float(trace['t'].iloc[-1])),
            'overshoot': overshoot(window['v_true'], reference),
            'settling_time': settling_time(window['t'], window['v_true'], reference, band),
            'peak_deviation': float(deviation.max()) if len(window) else np.nan,
            'max_p_h2': float(window['p_true'].max()) if len(window) else np.nan,
        })
    return pd.DataFrame(rows)
