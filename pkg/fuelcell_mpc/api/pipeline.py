"""
Data generation and training steps of the pipeline
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Optional, Tuple

from ..config import RunConfig
from ..model.datagen import Dataset, generate_corpus
from ..model.network import NetworkWeights, Scaler, TrainingReport, save_weights, train
from ..version import describe

logger = logging.getLogger(__name__)


def run_datagen(config: RunConfig, out: Optional[Path] = None, verbose: bool = True) -> Tuple[Dataset, Path]:
    """Generate the training corpus and write it with its sidecar"""
    settings = config.datagen
    noise = (0.0, 0.0) if settings.noiseless else config.noise_std
    dataset = generate_corpus(
        params=config.plant, n=settings.n_samples, bounds=settings.bounds, dt=settings.dt,
        noise_std=noise, seed=config.seed, warmup_steps=settings.warmup_steps, n_jobs=settings.n_jobs,
        verbose=verbose
    )
    dataset.metadata['config_hash'] = config.config_hash()
    path = dataset.save(out or config.dataset_path)
    return dataset, path


def run_training(
    config: RunConfig,
    dataset: Optional[Dataset] = None,
    out: Optional[Path] = None,
    verbose: bool = True
) -> Tuple[NetworkWeights, Scaler, TrainingReport, Path]:
    """Train on the corpus (read from the output dir when not given) and write the weights file"""
    dataset = dataset if dataset is not None else Dataset.load(config.dataset_path)
    weights, scaler, report = train(dataset, replace(config.train, verbose=verbose))
    metadata = {
        'train': config.train.to_dict(),
        'report': report.summary(),
        'dataset': dataset.metadata,
        'config_hash': config.config_hash(),
        'generator': describe(),
    }
    path = save_weights(weights, scaler, out or config.weights_path, metadata)
    report.to_frame().to_csv(Path(path).with_name(Path(path).stem + '_losses.csv'),
                             float_format='%.17g', lineterminator='\n')
    return weights, scaler, report, path
