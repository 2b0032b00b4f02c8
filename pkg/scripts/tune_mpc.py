"""
Optuna study over MPC weights and horizons, then a CSV of all trials.

    python scripts/tune_mpc.py --config configs/default.json --trials 40
"""

from pathlib import Path

import click

from fuelcell_mpc import configure_logging
from fuelcell_mpc.config import RunConfig
from fuelcell_mpc.model.network import load_weights
from fuelcell_mpc.optimization.tuning import tune_mpc


@click.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), default=None)
@click.option('--trials', type=int, default=40, show_default=True)
@click.option('--jobs', type=int, default=1, show_default=True)
def main(config_path, trials, jobs):
    configure_logging()
    config = RunConfig.load(config_path) if config_path else RunConfig()
    weights = scaler = None
    if config.controller == 'nn-mpc':
        config.check_files()
        weights, scaler = load_weights(config.weights_path)

    result = tune_mpc(config, n_trials=trials, weights=weights, scaler=scaler, n_jobs=jobs, verbose=True)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials_path = out / 'tuning_trials.csv'
    result['study'].trials_dataframe().to_csv(trials_path, index=False, lineterminator='\n')
    click.echo(result['final_results'].summary())
    click.echo(f"best: {result['best_params']} (score {result['best_value']:.4f}); trials in {trials_path}")


if __name__ == '__main__':
    main()
