"""
Surrogate model: training corpus, state-update network and its Jacobian
"""

from .datagen import Dataset, SampleBounds, collect, generate_corpus, lhs_sample
from .network import (
    DEFAULT_SHAPE, NetworkWeights, Scaler, TrainConfig, TrainingReport,
    backward, forward, init_weights, load_weights, loss, save_weights, train
)
from .autodiff import Dual, Jacobian, directional_derivative, jacobian, relu

__all__ = [
    'Dataset', 'SampleBounds', 'collect', 'generate_corpus', 'lhs_sample',
    'DEFAULT_SHAPE', 'NetworkWeights', 'Scaler', 'TrainConfig', 'TrainingReport',
    'backward', 'forward', 'init_weights', 'load_weights', 'loss', 'save_weights', 'train',
    'Dual', 'Jacobian', 'directional_derivative', 'jacobian', 'relu',
]
