"""
Training corpus generation: Latin hypercube inputs, one recorded plant transition per sample
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import qmc
from sklearn.model_selection import train_test_split
from tqdm import tqdm

from ..core.plant import (
    PlantInputs, PlantParams, PlantState, equilibrium_state, measure, plant_output, plant_step
)
from ..exceptions import (
    ConfigurationError, DataCollectionError, IntegrationError, InvalidStateError, LimitCurrentError
)
from ..version import describe

logger = logging.getLogger(__name__)

DATASET_COLUMNS = ['qh2', 'qair', 'i', 'v0', 'p0', 'v1', 'p1']
INPUT_COLUMNS = ['qh2', 'qair', 'i', 'v0', 'p0']
TARGET_COLUMNS = ['v1', 'p1']


@dataclass(frozen=True)
class SampleBounds:
    """Per-dimension (low, high) box for q_h2 (lpm), q_air (lpm) and current (A)"""
    q_h2: Tuple[float, float] = (100.0, 400.0)
    q_air: Tuple[float, float] = (300.0, 700.0)
    current: Tuple[float, float] = (60.0, 180.0)

    def __post_init__(self):
        for name in ('q_h2', 'q_air', 'current'):
            low, high = getattr(self, name)
            if not (np.isfinite(low) and np.isfinite(high)) or not low < high:
                raise ConfigurationError(f"bounds for {name} must satisfy low < high, got ({low}, {high})")

    @property
    def lows(self) -> np.ndarray:
        return np.array([self.q_h2[0], self.q_air[0], self.current[0]], dtype=float)

    @property
    def highs(self) -> np.ndarray:
        return np.array([self.q_h2[1], self.q_air[1], self.current[1]], dtype=float)

    def contains(self, points: np.ndarray) -> bool:
        points = np.atleast_2d(points)
        return bool(np.all(points >= self.lows) and np.all(points <= self.highs))

    def to_dict(self) -> Dict[str, List[float]]:
        return {'q_h2': list(self.q_h2), 'q_air': list(self.q_air), 'current': list(self.current)}

    @classmethod
    def from_dict(cls, values: Dict[str, Sequence[float]]) -> 'SampleBounds':
        unknown = set(values) - {'q_h2', 'q_air', 'current'}
        if unknown:
            raise ConfigurationError(f"unknown sample bounds: {sorted(unknown)}")
        return cls(**{k: tuple(float(x) for x in v) for k, v in values.items()})


def lhs_sample(n: int, bounds: SampleBounds, rng: np.random.Generator) -> np.ndarray:
    """
    Latin hypercube sample of n points in the bounds box

    Every dimension gets exactly one point in each of its n equal-width strata,
    uniformly placed inside the stratum, with an independent random
    stratum-to-point permutation per dimension.

    Returns:
        Array of shape (n, 3): columns q_h2, q_air, current
    """
    if n < 1:
        raise ConfigurationError(f"sample count must be >= 1, got {n}")
    engine = qmc.LatinHypercube(d=3, scramble=True, seed=rng)
    return qmc.scale(engine.random(n), bounds.lows, bounds.highs)


def stratum_counts(samples: np.ndarray, bounds: SampleBounds) -> np.ndarray:
    """Points per stratum, shape (3, n)"""
    samples = np.atleast_2d(samples)
    n = len(samples)
    unit = (samples - bounds.lows) / (bounds.highs - bounds.lows)
    idx = np.clip(np.floor(unit * n).astype(int), 0, n - 1)
    return np.stack([np.bincount(idx[:, d], minlength=n) for d in range(3)])


def is_stratified(samples: np.ndarray, bounds: SampleBounds) -> bool:
    """True when every dimension has exactly one point per stratum"""
    return bool(np.all(stratum_counts(samples, bounds) == 1))


@dataclass
class Dataset:
    """Recorded transitions (u_k, x_k, x_k+1) plus generation metadata"""
    records: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if list(self.records.columns) != DATASET_COLUMNS:
            raise ConfigurationError(f"dataset columns must be {DATASET_COLUMNS}, got {list(self.records.columns)}")
        if not np.all(np.isfinite(self.records.to_numpy(dtype=float))):
            raise ConfigurationError("dataset contains non-finite values")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def inputs(self) -> np.ndarray:
        """Network inputs [q_h2, q_air, i, v, p], shape (N, 5)"""
        return self.records[INPUT_COLUMNS].to_numpy(dtype=float)

    @property
    def targets(self) -> np.ndarray:
        """Network targets [v_next, p_next], shape (N, 2)"""
        return self.records[TARGET_COLUMNS].to_numpy(dtype=float)

    def split(self, val_fraction: float = 0.1, seed: int = 0) -> Tuple['Dataset', 'Dataset']:
        """Seeded shuffled train/validation split"""
        if not 0 < val_fraction < 1:
            raise ConfigurationError(f"val_fraction must lie in (0, 1), got {val_fraction}")
        train, val = train_test_split(self.records, test_size=val_fraction, random_state=seed, shuffle=True)
        return (Dataset(train.reset_index(drop=True), dict(self.metadata)),
                Dataset(val.reset_index(drop=True), dict(self.metadata)))

    def save(self, path: Union[str, Path]) -> Path:
        """Write CSV plus a `<stem>.meta.json` sidecar; returns the CSV path"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.records.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')
        sidecar_path(path).write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + '\n')
        logger.info("wrote %d records to %s", len(self), path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Dataset':
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"dataset file not found: {path}")
        records = pd.read_csv(path, float_precision='round_trip')
        meta_path = sidecar_path(path)
        metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(records, metadata)


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + '.meta.json')


def _collect_one(args) -> Optional[List[float]]:
    """Warm up the plant, then record one dt transition under the sampled inputs"""
    sample, seed_seq, params, dt, noise_std, warmup_steps, lows, highs, initial_state = args
    rng = np.random.default_rng(seed_seq)
    q_h2, q_air, current = (float(x) for x in sample)

    start_flows = rng.uniform(lows[:2], highs[:2])
    warm_flows = rng.uniform(lows[:2], highs[:2])
    n_warm = int(rng.integers(warmup_steps[0], warmup_steps[1] + 1))

    try:
        if initial_state is None:
            state = equilibrium_state(PlantInputs(start_flows[0], start_flows[1], current), params)
        else:
            state = initial_state

        warm = PlantInputs(float(warm_flows[0]), float(warm_flows[1]), current)
        for _ in range(n_warm):
            state = plant_step(state, warm, params, dt)

        applied = PlantInputs(q_h2, q_air, current)
        x_k = measure(plant_output(state, applied, params), noise_std, rng)
        state = plant_step(state, applied, params, dt)
        x_k1 = measure(plant_output(state, applied, params), noise_std, rng)
    except (IntegrationError, InvalidStateError, LimitCurrentError) as e:
        logger.warning("skipping sample %s: %s", sample, e)
        return None

    row = [q_h2, q_air, current, x_k.v_fc, x_k.p_h2, x_k1.v_fc, x_k1.p_h2]
    if not np.all(np.isfinite(row)):
        logger.warning("skipping sample %s: non-finite measurement", sample)
        return None
    return row


def collect(
    params: PlantParams,
    samples: np.ndarray,
    dt: float = 0.5,
    noise_std: Tuple[float, float] = (0.05, 0.005),
    seed: int = 0,
    bounds: Optional[SampleBounds] = None,
    warmup_steps: Tuple[int, int] = (5, 50),
    initial_state: Optional[PlantState] = None,
    max_skip_fraction: float = 0.01,
    n_jobs: int = 1,
    verbose: bool = True
) -> Dataset:
    """
    Record one plant transition per input sample

    Each sample is simulated from the equilibrium of a random flow pair,
    warmed up for a seeded random number of steps under another random flow
    pair at the sample's current, then stepped once with the sampled inputs.

    Args:
        params: Plant parameters
        samples: Input points, shape (N, 3)
        dt: Transition interval (s)
        noise_std: Measurement noise (V, atm); (0, 0) for a noiseless corpus
        seed: Root seed; every sample draws from its own spawned child
        bounds: Box the samples and warm-up flows are drawn from
        warmup_steps: Inclusive (min, max) warm-up step count
        initial_state: Fixed start state instead of a random equilibrium
        max_skip_fraction: Abort when more than this share of samples fail
        n_jobs: Worker processes; output order is canonical for any count
        verbose: Show progress bar

    Returns:
        Dataset in sample order
    """
    bounds = bounds or SampleBounds()
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != 3:
        raise ConfigurationError(f"samples must have 3 columns, got shape {samples.shape}")
    if not bounds.contains(samples):
        raise ConfigurationError("samples fall outside the sample bounds")
    if not dt > 0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    if warmup_steps[0] < 0 or warmup_steps[1] < warmup_steps[0]:
        raise ConfigurationError(f"invalid warm-up step range {warmup_steps}")

    children = np.random.SeedSequence(seed).spawn(len(samples))
    jobs = [
        (sample, child, params, dt, tuple(noise_std), tuple(warmup_steps), bounds.lows, bounds.highs, initial_state)
        for sample, child in zip(samples, children)
    ]

    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(tqdm(pool.map(_collect_one, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))),
                             total=len(jobs), desc="Collecting", disable=not verbose))
    else:
        rows = [_collect_one(job) for job in tqdm(jobs, desc="Collecting", disable=not verbose)]

    kept = [row for row in rows if row is not None]
    skipped = len(rows) - len(kept)
    if skipped > max_skip_fraction * len(rows):
        raise DataCollectionError(f"{skipped} of {len(rows)} samples failed (limit {max_skip_fraction:.0%})")
    if skipped:
        logger.warning("skipped %d of %d samples", skipped, len(rows))

    records = pd.DataFrame(kept, columns=DATASET_COLUMNS)
    metadata = {
        'dt': dt,
        'seed': seed,
        'bounds': bounds.to_dict(),
        'noise_std': list(noise_std),
        'warmup_steps': list(warmup_steps),
        'records': len(records),
        'skipped': skipped,
        'generator': describe(),
    }
    return Dataset(records, metadata)


def generate_corpus(
    params: Optional[PlantParams] = None,
    n: int = 2000,
    bounds: Optional[SampleBounds] = None,
    dt: float = 0.5,
    noise_std: Tuple[float, float] = (0.05, 0.005),
    seed: int = 0,
    warmup_steps: Tuple[int, int] = (5, 50),
    n_jobs: int = 1,
    verbose: bool = True
) -> Dataset:
    """LHS design followed by collection; the default corpus is 2000 transitions at 0.5 s"""
    params = params or PlantParams()
    bounds = bounds or SampleBounds()
    rng = np.random.default_rng(seed)
    samples = lhs_sample(n, bounds, rng)
    if not is_stratified(samples, bounds):
        raise DataCollectionError("Latin hypercube design lost its per-dimension stratification")
    # Collection gets an independent stream so the design does not shift it
    return collect(params, samples, dt=dt, noise_std=noise_std, seed=seed + 1, bounds=bounds,
                   warmup_steps=warmup_steps, n_jobs=n_jobs, verbose=verbose)
