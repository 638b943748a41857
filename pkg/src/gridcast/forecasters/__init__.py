"""Forecaster families, shared result containers and the CV driver."""

from .armax import ArmaxForecaster
from .base import FoldContext
from .boosted_trees import BoostedTreesForecaster
from .cv import CvResult, FoldForecast, run_forecaster_cv
from .detrend import LinearDetrend, fit_detrend
from .error_bank import ErrorBank, build_error_bank
from .holt_winters import HoltWintersForecaster, hw_filter
from .knn import KnnForecaster
from .persistence import PersistenceForecaster, persistence_forecast
from .results import ForecastResult, QuantileGrid, repair_crossings

FORECASTER_FAMILIES = {
    "persistence": PersistenceForecaster,
    "armax": ArmaxForecaster,
    "holt_winters": HoltWintersForecaster,
    "knn": KnnForecaster,
    "boosted_trees": BoostedTreesForecaster,
}

__all__ = [
    "ArmaxForecaster",
    "BoostedTreesForecaster",
    "CvResult",
    "ErrorBank",
    "FoldContext",
    "FoldForecast",
    "ForecastResult",
    "FORECASTER_FAMILIES",
    "HoltWintersForecaster",
    "KnnForecaster",
    "LinearDetrend",
    "PersistenceForecaster",
    "QuantileGrid",
    "build_error_bank",
    "fit_detrend",
    "hw_filter",
    "persistence_forecast",
    "repair_crossings",
    "run_forecaster_cv",
]
