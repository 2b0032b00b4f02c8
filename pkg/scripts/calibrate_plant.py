"""
Print the plant calibration table and cross-check the closed-form
equilibrium against a numerical root of the state derivative.

    python scripts/calibrate_plant.py [--config configs/default.json]
"""

import click
import numpy as np
import pandas as pd
from scipy.optimize import fsolve

from fuelcell_mpc.config import RunConfig
from fuelcell_mpc.core.plant import (
    PlantInputs, PlantState, calibrate_nernst_e0, equilibrium_state, nominal_operating_point,
    plant_derivative, plant_output
)

GRID = [
    (250.0, 500.0, 125.0),
    (100.0, 300.0, 125.0),
    (400.0, 700.0, 125.0),
    (200.0, 450.0, 90.0),
    (300.0, 600.0, 160.0),
    (150.0, 400.0, 60.0),
    (350.0, 650.0, 180.0),
]


def numerical_equilibrium(inputs: PlantInputs, params, guess: PlantState) -> PlantState:
    root = fsolve(lambda y: plant_derivative(PlantState.from_array(y), inputs, params).as_array(),
                  guess.as_array(), xtol=1e-12)
    return PlantState.from_array(root)


@click.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None)
def main(config_path):
    params = RunConfig.load(config_path).plant if config_path else RunConfig().plant

    state, inputs = nominal_operating_point(params)
    v, p = plant_output(state, inputs, params)
    click.echo(f"nominal point: I={inputs.current:.1f} A  V={v:.4f} V  p_H2={p:.4f} atm  "
               f"P={v * inputs.current / 1000:.2f} kW")
    click.echo(f"E0 for exactly 48 V: {calibrate_nernst_e0(params):.6f} V/cell (configured {params.nernst_e0})")

    rows = []
    for q_h2, q_air, current in GRID:
        inputs = PlantInputs(q_h2, q_air, current)
        closed = equilibrium_state(inputs, params)
        numeric = numerical_equilibrium(inputs, params, closed)
        v, p = plant_output(closed, inputs, params)
        rows.append({
            'q_h2': q_h2, 'q_air': q_air, 'current': current, 'v_fc': v, 'p_h2': p,
            'max_abs_diff': float(np.max(np.abs(closed.as_array() - numeric.as_array()))),
        })
    table = pd.DataFrame(rows)
    click.echo(table.to_string(index=False, float_format=lambda x: f"{x:.5f}"))
    if table['max_abs_diff'].max() > 1e-6:
        raise click.ClickException("closed-form equilibrium disagrees with the numerical root")


if __name__ == '__main__':
    main()
