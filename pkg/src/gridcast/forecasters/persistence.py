"""Seasonal persistence baseline.

Every future step is predicted by the value observed exactly one day
earlier: the instant ``t + j`` gets ``y[t + j - steps_per_day]``. All
skill scores in the benchmark are normalized by this baseline, so it
doubles as the reference forecaster.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .base import FoldContext


def persistence_forecast(
    y: np.ndarray, issues: np.ndarray, horizon: int, steps_per_day: int
) -> np.ndarray:
    """Day-ago values as forecasts, shape (len(issues), horizon)."""
    y = np.asarray(y, dtype=np.float64)
    issues = np.asarray(issues, dtype=np.int64)
    if horizon > steps_per_day:
        raise ConfigError(
            "persistence over one day needs horizon <= steps_per_day"
        )
    if issues.size and int(issues.min()) - steps_per_day + 1 < 0:
        raise ConfigError("issue instant too early for a day-ago reference")
    offsets = np.arange(1, horizon + 1) - steps_per_day
    return y[issues[:, None] + offsets[None, :]]


@dataclass(frozen=True)
class PersistenceForecaster:
    name: str = "persistence"

    def fit(self, ctx: FoldContext) -> "FittedPersistence":
        return FittedPersistence()


class FittedPersistence:
    def predict(self, ctx: FoldContext, rows: np.ndarray) -> np.ndarray:
        return persistence_forecast(
            ctx.frame[ctx.target],
            ctx.issues(rows),
            ctx.horizon,
            ctx.steps_per_day,
        )
