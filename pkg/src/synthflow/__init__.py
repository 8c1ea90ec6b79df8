"""Synthesize network attack flow features with a GP-WGAN and score the
result with a boosted-tree evaluator."""

__version__ = "0.1.0"

from .dataio import DatasetMatrix, FeatureSchema, NormalizationStats
from .evaluator import EvalConfig, QualityReport, evaluate
from .gan import GanConfig, GanModel, generate, load_checkpoint, save_checkpoint, train

__all__ = [
    "__version__",
    "DatasetMatrix",
    "FeatureSchema",
    "NormalizationStats",
    "EvalConfig",
    "QualityReport",
    "evaluate",
    "GanConfig",
    "GanModel",
    "generate",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
