"""
Command-line interface: datagen, train, simulate, compare, plot, tune
"""

import functools
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import click

from . import configure_logging, settings
from .analysis.plots import emit_plots
from .api.pipeline import run_datagen, run_training
from .api.simulate import compare as compare_runs
from .api.simulate import read_trace, run_scenario, write_trace
from .config import CONTROLLERS, RunConfig, Scenario
from .exceptions import ConfigurationError, FuelCellMpcError, SimulationError, exit_code_for
from .model.datagen import Dataset
from .model.network import load_weights
from .version import __version__

logger = logging.getLogger(__name__)


def _handle_errors(command):
    """Turn package errors into the documented exit codes"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except FuelCellMpcError as e:
            logger.error("%s: %s", type(e).__name__, e)
            sys.exit(exit_code_for(e))
    return wrapper


def _load_config(config_path: Optional[str], seed: Optional[int], out: Optional[str],
                 log_level: Optional[str]) -> RunConfig:
    configure_logging(log_level)
    config = RunConfig.load(config_path) if config_path else RunConfig()
    if seed is not None:
        config = config.with_seed(seed)
    if out is not None:
        config = replace(config, output_dir=out)
    return config


def common_options(seed: bool = True):
    def decorator(command):
        options = [
            click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                         help='JSON run configuration (defaults apply when omitted).'),
            click.option('--out', default=None, help='Output directory (overrides output_dir).'),
            click.option('--log-level', default=None,
                         type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False)),
        ]
        if seed:
            options.append(click.option('--seed', type=int, default=None, help='Run seed (overrides seed).'))
        for option in reversed(options):
            command = option(command)
        return command
    return decorator


def _scenario_override(config: RunConfig, scenario: Optional[str]) -> RunConfig:
    return replace(config, scenario=Scenario.load(scenario)) if scenario else config


@click.group()
@click.version_option(version=__version__, prog_name='fuelcell-mpc')
@click.option('--quiet', is_flag=True, help='Disable progress bars.')
def main(quiet):
    """Fuel cell NN-MPC pipeline"""
    if quiet:
        settings.enable_progress_bars(False)


@main.command()
@common_options()
@_handle_errors
def datagen(config_path, out, log_level, seed):
    """Collect the Latin hypercube training corpus"""
    config = _load_config(config_path, seed, out, log_level)
    dataset, path = run_datagen(config, verbose=settings.progress_bars)
    click.echo(f"wrote {len(dataset.records)} records to {path}")


@main.command()
@common_options()
@click.option('--dataset', 'dataset_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Corpus CSV (defaults to <out>/dataset.csv).')
@_handle_errors
def train(config_path, out, log_level, seed, dataset_path):
    """Train the surrogate network and write the weights file"""
    config = _load_config(config_path, seed, out, log_level)
    dataset = Dataset.load(dataset_path) if dataset_path else None
    _, _, report, path = run_training(config, dataset, verbose=settings.progress_bars)
    click.echo(report.summary())
    click.echo(f"wrote weights to {path}")


@main.command()
@common_options()
@click.option('--controller', type=click.Choice(CONTROLLERS), default=None)
@click.option('--scenario', default=None, help='Shipped scenario name or scenario JSON path.')
@click.option('--plots/--no-plots', default=True)
@_handle_errors
def simulate(config_path, out, log_level, seed, controller, scenario, plots):
    """Run one closed-loop scenario and write its trace"""
    config = _scenario_override(_load_config(config_path, seed, out, log_level), scenario)
    if controller:
        config = replace(config, controller=controller)
    output_dir = Path(config.output_dir)
    try:
        results = run_scenario(config, verbose=settings.progress_bars)
    except SimulationError as e:
        if e.trace is not None:
            output_dir.mkdir(parents=True, exist_ok=True)
            path = output_dir / f"{config.scenario.name}_{config.controller}.csv"
            write_trace(e.trace, path)
            logger.error("partial trace written to %s", path)
        raise
    path = results.export(output_dir)
    if plots:
        results.plot(output_dir)
    click.echo(results.summary())
    click.echo(f"wrote trace to {path}")


@main.command()
@common_options()
@click.option('--scenario', default=None, help='Shipped scenario name or scenario JSON path.')
@click.option('--controllers', nargs=2, type=click.Choice(CONTROLLERS), default=('nn-mpc', 'plant-mpc'),
              show_default=True)
@_handle_errors
def compare(config_path, out, log_level, seed, scenario, controllers):
    """Run two controllers on the same scenario and seed"""
    config = _scenario_override(_load_config(config_path, seed, out, log_level), scenario)
    weights = scaler = None
    if 'nn-mpc' in controllers:
        replace(config, controller='nn-mpc').check_files()
        weights, scaler = load_weights(config.weights_path)
    report = compare_runs(tuple(replace(config, controller=c) for c in controllers),
                          weights, scaler, verbose=settings.progress_bars)
    path = report.export(config.output_dir)
    report.plot(config.output_dir)
    click.echo(report.summary())
    click.echo(f"wrote comparison to {path}")


@main.command()
@common_options(seed=False)
@click.argument('traces', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@_handle_errors
def plot(config_path, out, log_level, traces: Sequence[str]):
    """Emit voltage and constraint SVGs from trace CSVs"""
    config = _load_config(config_path, None, out, log_level)
    frames = {}
    scenario = config.scenario.name
    for trace_path in traces:
        stem = Path(trace_path).stem
        prefix, _, controller = stem.rpartition('_')
        if prefix:
            scenario = prefix
        frames[controller or stem] = read_trace(trace_path)
    if len(frames) != len(traces):
        raise ConfigurationError("trace files must name distinct controllers")
    for path in emit_plots(frames, config.output_dir, scenario,
                           reference=config.scenario.reference, p_limit=config.mpc.p_h2_max):
        click.echo(f"wrote {path}")


@main.command()
@common_options()
@click.option('--trials', type=int, default=30, show_default=True)
@click.option('--scenario', default=None, help='Shipped scenario name or scenario JSON path.')
@_handle_errors
def tune(config_path, out, log_level, seed, trials, scenario):
    """Search MPC weights and horizons with Optuna"""
    from .optimization.tuning import tune_mpc

    config = _scenario_override(_load_config(config_path, seed, out, log_level), scenario)
    weights = scaler = None
    if config.controller == 'nn-mpc':
        config.check_files()
        weights, scaler = load_weights(config.weights_path)
    result = tune_mpc(config, n_trials=trials, weights=weights, scaler=scaler, verbose=settings.progress_bars)
    click.echo(f"best score {result['best_value']:.4f}")
    for key, value in result['best_params'].items():
        click.echo(f"  {key} = {value}")


if __name__ == '__main__':
    main()
