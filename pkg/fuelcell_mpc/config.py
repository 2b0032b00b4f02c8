"""
Run configuration: scenarios and the JSON config file
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .control.mpc import MpcConfig
from .core.plant import PlantParams
from .exceptions import ConfigurationError
from .model.datagen import SampleBounds
from .model.network import TrainConfig

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
CONTROLLERS = ('nn-mpc', 'plant-mpc', 'hold')
SCENARIO_DIR = Path(__file__).resolve().parent / 'scenarios'


@dataclass(frozen=True)
class Scenario:
    """
    Load-current profile as piecewise-linear (time, current) knots

    The current holds its last knot value after the final knot. Noise level
    and seed fall back to the run config when left unset.
    """
    name: str
    duration: float
    knots: Tuple[Tuple[float, float], ...]
    reference: float = 48.0
    initial_flows: Tuple[float, float] = (100.0, 300.0)
    current_bounds: Tuple[float, float] = (60.0, 180.0)
    noise_std: Optional[Tuple[float, float]] = None
    seed: Optional[int] = None
    description: str = ''

    def __post_init__(self):
        knots = tuple((float(t), float(i)) for t, i in self.knots)
        object.__setattr__(self, 'knots', knots)
        object.__setattr__(self, 'initial_flows', tuple(float(q) for q in self.initial_flows))
        object.__setattr__(self, 'current_bounds', tuple(float(b) for b in self.current_bounds))
        if self.noise_std is not None:
            object.__setattr__(self, 'noise_std', tuple(float(s) for s in self.noise_std))
        if not self.duration > 0:
            raise ConfigurationError(f"scenario {self.name}: duration must be > 0")
        if not knots:
            raise ConfigurationError(f"scenario {self.name}: needs at least one knot")
        times = np.array([t for t, _ in knots])
        currents = np.array([i for _, i in knots])
        if times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ConfigurationError(f"scenario {self.name}: knot times must be >= 0 and strictly increasing")
        low, high = self.current_bounds
        if np.any(currents < low) or np.any(currents > high):
            raise ConfigurationError(f"scenario {self.name}: currents must lie within [{low}, {high}] A")

    def current_at(self, t: float) -> float:
        times = [k[0] for k in self.knots]
        currents = [k[1] for k in self.knots]
        return float(np.interp(t, times, currents))

    def n_steps(self, dt: float) -> int:
        n = int(round(self.duration / dt))
        if abs(n * dt - self.duration) > 1e-9:
            raise ConfigurationError(f"scenario {self.name}: duration {self.duration} is not a multiple of dt {dt}")
        return n

    def currents(self, dt: float) -> np.ndarray:
        """Sampled current for steps 0..N"""
        return np.array([self.current_at(k * dt) for k in range(self.n_steps(dt) + 1)])

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values['knots'] = [list(k) for k in self.knots]
        for key in ('initial_flows', 'current_bounds', 'noise_std'):
            if values[key] is not None:
                values[key] = list(values[key])
        return values

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'Scenario':
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(f"invalid scenario: {e}")

    @classmethod
    def load(cls, name_or_path: Union[str, Path]) -> 'Scenario':
        """Shipped scenario by name, or a JSON file"""
        path = Path(name_or_path)
        if not path.suffix:
            path = SCENARIO_DIR / f"{name_or_path}.json"
        if not path.exists():
            raise ConfigurationError(f"scenario not found: {name_or_path}")
        return cls.from_dict(_read_json(path))


def available_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob('*.json'))


@dataclass
class DatagenConfig:
    n_samples: int = 2000
    bounds: SampleBounds = field(default_factory=SampleBounds)
    dt: float = 0.5
    warmup_steps: Tuple[int, int] = (5, 50)
    noiseless: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        self.warmup_steps = tuple(int(w) for w in self.warmup_steps)
        if self.n_samples < 1:
            raise ConfigurationError(f"n_samples must be >= 1, got {self.n_samples}")
        if not self.dt > 0:
            raise ConfigurationError(f"datagen dt must be > 0, got {self.dt}")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'DatagenConfig':
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown datagen settings: {sorted(unknown)}")
        values = dict(values)
        if 'bounds' in values:
            values['bounds'] = SampleBounds.from_dict(values['bounds'])
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_samples': self.n_samples,
            'bounds': self.bounds.to_dict(),
            'dt': self.dt,
            'warmup_steps': list(self.warmup_steps),
            'noiseless': self.noiseless,
            'n_jobs': self.n_jobs,
        }


@dataclass
class RunConfig:
    """Everything one pipeline run needs"""
    plant: PlantParams = field(default_factory=PlantParams)
    noise_std: Tuple[float, float] = (0.05, 0.005)
    datagen: DatagenConfig = field(default_factory=DatagenConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(verbose=False))
    mpc: MpcConfig = field(default_factory=MpcConfig)
    scenario: Scenario = field(default_factory=lambda: Scenario.load('step'))
    controller: str = 'nn-mpc'
    weights: Optional[str] = None
    output_dir: str = 'runs'
    seed: int = 0
    record_timing: bool = False
    slack_audit_steps: int = 20

    def __post_init__(self):
        self.noise_std = tuple(float(s) for s in self.noise_std)
        if len(self.noise_std) != 2 or min(self.noise_std) < 0:
            raise ConfigurationError(f"noise_std must be two values >= 0, got {self.noise_std}")
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.slack_audit_steps < 0:
            raise ConfigurationError("slack_audit_steps must be >= 0")
        self.scenario.n_steps(self.mpc.dt)

    @property
    def weights_path(self) -> Path:
        return Path(self.weights) if self.weights else Path(self.output_dir) / 'weights.json'

    @property
    def dataset_path(self) -> Path:
        return Path(self.output_dir) / 'dataset.csv'

    @property
    def simulation_noise(self) -> Tuple[float, float]:
        return self.scenario.noise_std if self.scenario.noise_std is not None else self.noise_std

    @property
    def simulation_seed(self) -> int:
        return self.scenario.seed if self.scenario.seed is not None else self.seed

    def check_files(self):
        """Referenced input files must exist before a network-model run"""
        if self.controller == 'nn-mpc' and not self.weights_path.exists():
            raise ConfigurationError(f"weights file not found: {self.weights_path}")

    def replace(self, **changes) -> 'RunConfig':
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': CONFIG_VERSION,
            'plant': self.plant.to_dict(),
            'noise_std': list(self.noise_std),
            'datagen': self.datagen.to_dict(),
            'train': self.train.to_dict(),
            'mpc': self.mpc.to_dict(),
            'scenario': self.scenario.to_dict(),
            'controller': self.controller,
            'weights': self.weights,
            'output_dir': self.output_dir,
            'seed': self.seed,
            'record_timing': self.record_timing,
            'slack_audit_steps': self.slack_audit_steps,
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form"""
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'RunConfig':
        values = dict(values)
        version = values.pop('version', CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigurationError(f"config version {version} is not supported (expected {CONFIG_VERSION})")
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

        parsers = {
            'plant': PlantParams.from_dict,
            'datagen': DatagenConfig.from_dict,
            'train': lambda v: TrainConfig.from_dict({'verbose': False, **v}),
            'mpc': MpcConfig.from_dict,
            'scenario': lambda v: Scenario.from_dict(v) if isinstance(v, dict) else Scenario.load(v),
        }
        kwargs = {}
        for key, value in values.items():
            try:
                kwargs[key] = parsers[key](value) if key in parsers else value
            except TypeError as e:
                raise ConfigurationError(f"invalid '{key}' section: {e}")
        config = cls(**kwargs)
        if 'seed' not in values.get('train', {}):
            # Training follows the run seed unless pinned
            config.train = replace(config.train, seed=config.seed)
        return config

    def with_seed(self, seed: int) -> 'RunConfig':
        return replace(self, seed=seed, train=replace(self.train, seed=seed))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RunConfig':
        config = cls.from_dict(_read_json(Path(path)))
        logger.debug("loaded config %s (hash %s)", path, config.config_hash()[:12])
        return config


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        values = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return values
