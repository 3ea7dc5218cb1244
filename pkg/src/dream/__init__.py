"""Dual-line multimodal recommender with behavior/modal alignment."""

from .config import RunConfig, load_config
from .errors import ConfigError, DataError, DimensionError, DreamError, NumericError
from .ingest import Dataset, build_dataset
from .model import DreamModel, ModelConfig, build_graphs
from .objectives import LossWeights
from .training import TrainerConfig, train
from .evaluation import evaluate

__version__ = "0.1.0"
