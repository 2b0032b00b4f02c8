"""
Feedforward ReLU state-update network: forward pass, loss, backprop, Adam training, weight files
"""

import copy
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler
from tqdm import tqdm

from ..exceptions import ConfigurationError, TrainingDivergedError, WeightsFormatError
from .datagen import Dataset

logger = logging.getLogger(__name__)

DEFAULT_SHAPE = (5, 16, 32, 8, 2)
WEIGHTS_FORMAT_VERSION = 1

Layer = Tuple[np.ndarray, np.ndarray]
Batch = Union[Dataset, Tuple[np.ndarray, np.ndarray]]


@dataclass
class NetworkWeights:
    """Layer (weight out x in, bias out) pairs; ReLU on hidden layers, identity on the output"""
    layers: List[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("network needs at least one layer")
        self.layers = [(np.asarray(w, dtype=float), np.asarray(b, dtype=float)) for w, b in self.layers]
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise ConfigurationError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i > 0 and w.shape[1] != self.layers[i - 1][0].shape[0]:
                raise ConfigurationError(
                    f"layer {i}: expects {w.shape[1]} inputs but layer {i - 1} produces {self.layers[i - 1][0].shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"layer {i} contains non-finite entries")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.layers[0][0].shape[1],) + tuple(w.shape[0] for w, _ in self.layers)

    def copy(self) -> 'NetworkWeights':
        return NetworkWeights([(w.copy(), b.copy()) for w, b in self.layers])

    def equals(self, other: 'NetworkWeights') -> bool:
        """Bit-exact comparison"""
        return self.shape == other.shape and all(
            np.array_equal(w1, w2) and np.array_equal(b1, b2)
            for (w1, b1), (w2, b2) in zip(self.layers, other.layers)
        )


def validate_shape(weights: NetworkWeights, expected: Sequence[int] = DEFAULT_SHAPE):
    """Raise naming the first layer whose shape differs from the expected chain"""
    expected = tuple(expected)
    if len(weights.layers) != len(expected) - 1:
        raise ConfigurationError(f"network has {len(weights.layers)} layers, expected {len(expected) - 1}")
    for i, (w, _) in enumerate(weights.layers):
        want = (expected[i + 1], expected[i])
        if w.shape != want:
            raise ConfigurationError(f"layer {i} weight has shape {w.shape}, expected {want}")


@dataclass
class Scaler:
    """Per-feature affine standardization for the 5 inputs and 2 outputs"""
    in_shift: np.ndarray
    in_scale: np.ndarray
    out_shift: np.ndarray
    out_scale: np.ndarray

    def __post_init__(self):
        for name in ('in_shift', 'in_scale', 'out_shift', 'out_scale'):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim != 1 or not np.all(np.isfinite(value)):
                raise ConfigurationError(f"scaler {name} must be a finite vector")
            setattr(self, name, value)
        if self.in_shift.shape != self.in_scale.shape or self.out_shift.shape != self.out_scale.shape:
            raise ConfigurationError("scaler shift and scale lengths differ")
        if np.any(self.in_scale <= 0) or np.any(self.out_scale <= 0):
            raise ConfigurationError("scaler scales must be > 0")

    @classmethod
    def identity(cls, n_in: int = 5, n_out: int = 2) -> 'Scaler':
        return cls(np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out))

    @classmethod
    def fit(cls, inputs: np.ndarray, targets: np.ndarray) -> 'Scaler':
        """Zero-mean unit-variance scaling; constant features keep scale 1"""
        x = StandardScaler().fit(inputs)
        y = StandardScaler().fit(targets)
        return cls(x.mean_, x.scale_, y.mean_, y.scale_)

    def scale_inputs(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - self.in_shift) / self.in_scale

    def scale_outputs(self, outputs: np.ndarray) -> np.ndarray:
        return (outputs - self.out_shift) / self.out_scale

    def unscale_outputs(self, outputs: np.ndarray) -> np.ndarray:
        return outputs * self.out_scale + self.out_shift

    def to_dict(self) -> Dict[str, List[float]]:
        return {name: getattr(self, name).tolist() for name in ('in_shift', 'in_scale', 'out_shift', 'out_scale')}


@dataclass
class TrainConfig:
    """Optimizer and schedule settings"""
    epochs: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    patience: int = 50
    val_fraction: float = 0.1
    shape: Tuple[int, ...] = DEFAULT_SHAPE
    n_jobs: int = 1
    verbose: bool = True

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in [0, 1)")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}")
        if self.n_jobs < 1:
            raise ConfigurationError(f"n_jobs must be >= 1, got {self.n_jobs}")
        if len(self.shape) < 2 or min(self.shape) < 1:
            raise ConfigurationError(f"invalid network shape {self.shape}")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'TrainConfig':
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown train settings: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values['shape'] = list(self.shape)
        return values


@dataclass
class TrainingReport:
    """Per-epoch losses on scaled outputs"""
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch] if self.val_loss else float('nan')

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'train_loss': self.train_loss, 'val_loss': self.val_loss},
                            index=pd.RangeIndex(len(self.train_loss), name='epoch'))

    def summary(self) -> Dict[str, Any]:
        return {
            'epochs_run': self.epochs_run,
            'best_epoch': self.best_epoch,
            'best_val_loss': self.best_val_loss,
            'final_train_loss': self.train_loss[-1] if self.train_loss else float('nan'),
            'stopped_early': self.stopped_early,
        }


def init_weights(shape: Sequence[int], rng: np.random.Generator) -> NetworkWeights:
    """He-uniform weights, zero biases"""
    layers = []
    for fan_in, fan_out in zip(shape[:-1], shape[1:]):
        limit = np.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return NetworkWeights(layers)


def _forward_scaled(weights: NetworkWeights, z: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Forward pass on scaled inputs (N, n_in); also returns every layer's pre-activation"""
    pre_activations = []
    a = z
    last = len(weights.layers) - 1
    for i, (w, b) in enumerate(weights.layers):
        h = a @ w.T + b
        pre_activations.append(h)
        a = h if i == last else np.maximum(h, 0.0)
    return a, pre_activations


def forward(weights: NetworkWeights, scaler: Scaler, inputs: np.ndarray) -> np.ndarray:
    """
    Predict [v_next, p_next] in V and atm

    Args:
        weights: Network weights
        scaler: Input/output scaler
        inputs: One point [q_h2, q_air, i, v, p] or a batch of shape (N, 5)

    Returns:
        Array of shape (2,) for a single point, (N, 2) for a batch
    """
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n_in = weights.shape[0]
    if x.ndim != 2 or x.shape[1] != n_in or scaler.in_shift.shape[0] != n_in:
        raise ConfigurationError(f"expected inputs with {n_in} features, got shape {np.shape(inputs)}")
    if scaler.out_shift.shape[0] != weights.shape[-1]:
        raise ConfigurationError("scaler output width does not match the network")
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("network input is not finite")
    out, _ = _forward_scaled(weights, scaler.scale_inputs(x))
    out = scaler.unscale_outputs(out)
    return out[0] if single else out


def _as_arrays(data: Batch) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(data, Dataset):
        return data.inputs, data.targets
    inputs, targets = data
    return np.atleast_2d(np.asarray(inputs, dtype=float)), np.atleast_2d(np.asarray(targets, dtype=float))


def _scaled_loss(weights: NetworkWeights, xs: np.ndarray, ys: np.ndarray) -> float:
    out, _ = _forward_scaled(weights, xs)
    return float(np.mean((out - ys) ** 2))


def loss(weights: NetworkWeights, scaler: Scaler, data: Batch) -> float:
    """Mean squared error over all scaled output entries"""
    inputs, targets = _as_arrays(data)
    if len(inputs) == 0:
        raise ConfigurationError("loss needs at least one record")
    return _scaled_loss(weights, scaler.scale_inputs(inputs), scaler.scale_outputs(targets))


def _gradient_sum(weights: NetworkWeights, xs: np.ndarray, ys: np.ndarray) -> List[Layer]:
    """Gradient of the summed squared error (not yet averaged)"""
    out, pre = _forward_scaled(weights, xs)
    delta = 2.0 * (out - ys)
    grads: List[Layer] = [None] * len(weights.layers)
    for i in range(len(weights.layers) - 1, -1, -1):
        a_prev = xs if i == 0 else np.maximum(pre[i - 1], 0.0)
        grads[i] = (delta.T @ a_prev, delta.sum(axis=0))
        if i > 0:
            # ReLU subgradient at exactly zero is zero
            delta = (delta @ weights.layers[i][0]) * (pre[i - 1] > 0)
    return grads


def _mean_gradient(weights: NetworkWeights, xs: np.ndarray, ys: np.ndarray, n_jobs: int = 1,
                   pool: Optional[ThreadPoolExecutor] = None) -> List[Layer]:
    count = ys.size
    if n_jobs <= 1 or len(xs) < 2 * n_jobs:
        grads = _gradient_sum(weights, xs, ys)
    else:
        shards = np.array_split(np.arange(len(xs)), n_jobs)
        parts = list(pool.map(lambda idx: _gradient_sum(weights, xs[idx], ys[idx]), shards))
        # Reduce in shard order so the sum is reproducible
        grads = parts[0]
        for part in parts[1:]:
            grads = [(gw + pw, gb + pb) for (gw, gb), (pw, pb) in zip(grads, part)]
    return [(gw / count, gb / count) for gw, gb in grads]


def backward(weights: NetworkWeights, scaler: Scaler, batch: Batch) -> NetworkWeights:
    """Gradient of `loss` with respect to every weight and bias"""
    inputs, targets = _as_arrays(batch)
    if len(inputs) == 0:
        raise ConfigurationError("backward needs at least one record")
    return NetworkWeights(_mean_gradient(weights, scaler.scale_inputs(inputs), scaler.scale_outputs(targets)))


def train(dataset: Dataset, config: Optional[TrainConfig] = None) -> Tuple[NetworkWeights, Scaler, TrainingReport]:
    """
    Fit the network with Adam over shuffled minibatches

    The scaler is fit on the training split only. Training stops after
    `config.patience` epochs without a validation improvement and the
    best-validation weights are returned.

    Args:
        dataset: Recorded transitions, at least 10
        config: Training settings

    Returns:
        Tuple of (weights, scaler, report)
    """
    config = config or TrainConfig()
    if len(dataset) < 10:
        raise ConfigurationError(f"training needs at least 10 records, got {len(dataset)}")

    train_set, val_set = dataset.split(config.val_fraction, config.seed)
    scaler = Scaler.fit(train_set.inputs, train_set.targets)
    xs, ys = scaler.scale_inputs(train_set.inputs), scaler.scale_outputs(train_set.targets)
    xv, yv = scaler.scale_inputs(val_set.inputs), scaler.scale_outputs(val_set.targets)

    rng = np.random.default_rng(config.seed)
    weights = init_weights(config.shape, rng)
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in weights.layers]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in weights.layers]
    step = 0

    report = TrainingReport()
    best = weights.copy()
    best_val = np.inf
    stale = 0
    pool = ThreadPoolExecutor(max_workers=config.n_jobs) if config.n_jobs > 1 else None

    try:
        for epoch in tqdm(range(config.epochs), desc="Training", disable=not config.verbose):
            order = rng.permutation(len(xs))
            for start in range(0, len(xs), config.batch_size):
                idx = order[start:start + config.batch_size]
                grads = _mean_gradient(weights, xs[idx], ys[idx], config.n_jobs, pool)
                step += 1
                lr = config.learning_rate * np.sqrt(1 - config.beta2 ** step) / (1 - config.beta1 ** step)
                layers = []
                for i, ((w, b), (gw, gb)) in enumerate(zip(weights.layers, grads)):
                    mw = config.beta1 * m[i][0] + (1 - config.beta1) * gw
                    mb = config.beta1 * m[i][1] + (1 - config.beta1) * gb
                    vw = config.beta2 * v[i][0] + (1 - config.beta2) * gw ** 2
                    vb = config.beta2 * v[i][1] + (1 - config.beta2) * gb ** 2
                    m[i], v[i] = (mw, mb), (vw, vb)
                    layers.append((w - lr * mw / (np.sqrt(vw) + config.epsilon),
                                   b - lr * mb / (np.sqrt(vb) + config.epsilon)))
                if not all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in layers):
                    logger.error("training diverged at epoch %d: non-finite weights", epoch)
                    raise TrainingDivergedError(f"non-finite weights at epoch {epoch}")
                weights = NetworkWeights(layers)

            train_loss = _scaled_loss(weights, xs, ys)
            val_loss = _scaled_loss(weights, xv, yv)
            if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
                logger.error("training diverged at epoch %d: loss %s / %s", epoch, train_loss, val_loss)
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            report.train_loss.append(train_loss)
            report.val_loss.append(val_loss)

            if val_loss < best_val:
                best_val, best, stale = val_loss, weights.copy(), 0
                report.best_epoch = epoch
            else:
                stale += 1
                if stale >= config.patience:
                    report.stopped_early = True
                    logger.info("early stop at epoch %d (best epoch %d)", epoch, report.best_epoch)
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    logger.info("training finished: train loss %.3e, best val loss %.3e",
                report.train_loss[-1], report.best_val_loss)
    return best, scaler, report


def _metadata_hash(metadata: Dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(metadata, sort_keys=True).encode()).hexdigest()


def save_weights(weights: NetworkWeights, scaler: Scaler, path: Union[str, Path],
                 metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write a versioned JSON weights file; floats round-trip exactly"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = copy.deepcopy(metadata or {})
    document = {
        'format_version': WEIGHTS_FORMAT_VERSION,
        'shape': list(weights.shape),
        'layers': [{'weight': w.tolist(), 'bias': b.tolist()} for w, b in weights.layers],
        'scaler': scaler.to_dict(),
        'metadata': metadata,
        'metadata_hash': _metadata_hash(metadata),
    }
    path.write_text(json.dumps(document, sort_keys=True) + '\n')
    logger.info("wrote weights to %s", path)
    return path


def _read_document(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except FileNotFoundError:
        raise WeightsFormatError(f"weights file not found: {path}")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise WeightsFormatError(f"weights file {path} is corrupt or truncated: {e}")
    if not isinstance(document, dict):
        raise WeightsFormatError(f"weights file {path} has no top-level object")
    version = document.get('format_version')
    if version != WEIGHTS_FORMAT_VERSION:
        raise WeightsFormatError(
            f"weights file {path} has format version {version}, expected {WEIGHTS_FORMAT_VERSION}"
        )
    return document


def load_weights(path: Union[str, Path],
                 expected_shape: Optional[Sequence[int]] = DEFAULT_SHAPE) -> Tuple[NetworkWeights, Scaler]:
    """
    Read a weights file written by `save_weights`

    Args:
        path: Weights file
        expected_shape: Layer width chain to enforce; None accepts any consistent network

    Returns:
        Tuple of (weights, scaler)
    """
    document = _read_document(path)
    try:
        layers = [(np.array(layer['weight'], dtype=float).reshape(len(layer['bias']), -1),
                   np.array(layer['bias'], dtype=float))
                  for layer in document['layers']]
        scaler = Scaler(**{k: np.array(v, dtype=float) for k, v in document['scaler'].items()})
        declared = tuple(document['shape'])
        metadata = document['metadata']
        stored_hash = document['metadata_hash']
    except (KeyError, TypeError, ValueError) as e:
        raise WeightsFormatError(f"weights file {path} is malformed: {e}")

    for i, (w, b) in enumerate(layers):
        want = (declared[i + 1], declared[i]) if i + 1 < len(declared) else None
        if w.shape != want:
            raise WeightsFormatError(f"layer {i} weight has shape {w.shape}, header declares {want}")

    try:
        weights = NetworkWeights(layers)
        if expected_shape is not None:
            validate_shape(weights, expected_shape)
    except ConfigurationError as e:
        raise WeightsFormatError(f"weights file {path}: {e}")

    if _metadata_hash(metadata) != stored_hash:
        raise WeightsFormatError(f"weights file {path}: metadata hash mismatch")
    return weights, scaler


def load_weights_metadata(path: Union[str, Path]) -> Dict[str, Any]:
    """Training metadata stored alongside the weights"""
    return _read_document(path).get('metadata', {})
