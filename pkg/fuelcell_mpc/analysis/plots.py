"""
Plotting and visualization functions
"""

import logging
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .metrics import PRESSURE_LIMIT  # noqa: E402

logger = logging.getLogger(__name__)


def plot_voltage(traces: Dict[str, pd.DataFrame], reference: float = 48.0):
    """Voltage and reference against time with the load current on a second axis"""
    fig, ax = plt.subplots(figsize=(9, 4.5))
    first = next(iter(traces.values()))
    for label, trace in traces.items():
        ax.plot(trace['t'], trace['v_true'], linewidth=1.5, label=f"{label} V")
    ax.axhline(reference, color='black', linestyle='--', linewidth=1, label='reference')
    ax.set_xlim(first['t'].iloc[0], first['t'].iloc[-1])
    ax.set_xlabel('Time (s)')
    ax.set_ylabel('Stack voltage (V)')

    current_ax = ax.twinx()
    current_ax.plot(first['t'], first['i'], color='grey', linestyle=':', linewidth=1.2, label='current')
    current_ax.set_ylabel('Current (A)')

    handles, labels = ax.get_legend_handles_labels()
    extra_handles, extra_labels = current_ax.get_legend_handles_labels()
    ax.legend(handles + extra_handles, labels + extra_labels, loc='lower right', fontsize='small')
    ax.set_title('Output voltage under the load profile')
    fig.tight_layout()
    return fig


def plot_constraints(traces: Dict[str, pd.DataFrame], p_limit: float = PRESSURE_LIMIT):
    """Hydrogen pressure with its limit, commanded flows and flow increments"""
    fig, (p_ax, q_ax, dq_ax) = plt.subplots(3, 1, figsize=(9, 8), sharex=True)
    first = next(iter(traces.values()))
    for label, trace in traces.items():
        p_ax.plot(trace['t'], trace['p_true'], linewidth=1.5, label=label)
        q_ax.plot(trace['t'], trace['qh2'], linewidth=1.2, label=f"{label} H2")
        q_ax.plot(trace['t'], trace['qair'], linewidth=1.2, linestyle='--', label=f"{label} air")
        dq_ax.step(trace['t'], trace['dqh2'], where='post', linewidth=1, label=f"{label} dH2")
        dq_ax.step(trace['t'], trace['dqair'], where='post', linewidth=1, linestyle='--', label=f"{label} dair")
    p_ax.axhline(p_limit, color='red', linestyle='--', linewidth=1, label=f"limit {p_limit} atm")
    p_ax.set_ylabel('H2 pressure (atm)')
    q_ax.set_ylabel('Flow (lpm)')
    dq_ax.set_ylabel('Increment (lpm)')
    dq_ax.set_xlabel('Time (s)')
    dq_ax.set_xlim(first['t'].iloc[0], first['t'].iloc[-1])
    for ax in (p_ax, q_ax, dq_ax):
        ax.legend(loc='upper right', fontsize='x-small')
    p_ax.set_title('Constraint handling and system inputs')
    fig.tight_layout()
    return fig


def emit_plots(traces: Dict[str, pd.DataFrame], output_dir: Union[str, Path], scenario: str,
               reference: float = 48.0, p_limit: float = PRESSURE_LIMIT) -> List[Path]:
    """
    Write the voltage and constraint figures as SVG

    One trace gives `<scenario>_<controller>_*.svg`; several are overlaid in
    `<scenario>_comparison_*.svg`.

    Returns:
        Paths of the written files
    """
    if not traces or any(trace.empty for trace in traces.values()):
        raise ValueError("emit_plots needs non-empty traces")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    tag = next(iter(traces)) if len(traces) == 1 else 'comparison'

    written = []
    for kind, fig in (('voltage', plot_voltage(traces, reference)), ('constraints', plot_constraints(traces, p_limit))):
        path = output_dir / f"{scenario}_{tag}_{kind}.svg"
        fig.savefig(path, format='svg')
        plt.close(fig)
        written.append(path)
        logger.info("wrote %s", path)
    return written
