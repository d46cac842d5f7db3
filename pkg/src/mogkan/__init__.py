"""Graph Kolmogorov-Arnold networks for multi-omics classification.

Submodules: ``spline`` (B-spline bases), ``kan`` (layers, batch norm, Adam),
``graph`` (interaction tables, feature graphs, aggregation), ``model``
(graph-KAN classifier), ``training`` (fit, cross-validation, grid search),
``selection`` (standardization, Welch filter, LASSO), ``data`` (matrices,
integration, folds, synthetic data), ``metrics``, ``importance``, ``cli``.
"""

from .errors import MogkanError, ParseError
from .model import ModelConfig, init_model, forward, predict, load_checkpoint, save_checkpoint
from .training import train, cross_validate, grid_search
from .importance import feature_importance

__version__ = "0.1.0"

__all__ = [
    "MogkanError",
    "ParseError",
    "ModelConfig",
    "init_model",
    "forward",
    "predict",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "cross_validate",
    "grid_search",
    "feature_importance",
]
