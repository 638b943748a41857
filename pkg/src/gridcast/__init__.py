"""Hierarchical probabilistic load forecasting benchmark.

Core objects are importable from the package root; the forecaster
families live under :mod:`gridcast.forecasters` and the benchmark
driver under :mod:`gridcast.bench`.
"""

from .errors import ConfigError, DataError, GridcastError, NumericError
from .frames import TimeSeriesFrame, add_calendar_features
from .hierarchy import Hierarchy, build_hierarchy, build_summation_matrix
from .embedding import EmbeddingSpec, SamplePair, hankel_embed
from .folds import FoldPlan, FoldSequence, build_folds

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "GridcastError",
    "NumericError",
    "TimeSeriesFrame",
    "add_calendar_features",
    "Hierarchy",
    "build_hierarchy",
    "build_summation_matrix",
    "EmbeddingSpec",
    "SamplePair",
    "hankel_embed",
    "FoldPlan",
    "FoldSequence",
    "build_folds",
    "__version__",
]
