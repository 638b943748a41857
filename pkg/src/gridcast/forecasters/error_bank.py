"""Empirical forecast-error quantiles, conditioned on when and how far.

Point forecasters are turned into probabilistic ones by banking their
training errors ``e = prediction - truth`` per (step ahead, step of
day of the issue instant) cell and reading empirical quantiles back
out. For a future value ``y = prediction - e``, the level-``a``
forecast quantile is ``prediction - q_e(1 - a)``, which makes a bank
built from unbiased Gaussian errors produce the familiar symmetric
fans (the 95% line sits 1.645 error deviations above the mean).

Cells can be empty when training issues concentrate on few steps of
the day; those fall back to the pooled per-step-ahead error
population. Querying a fan at an unbacked step of day warns, building
a bank with unused empty cells does not.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from .results import ForecastResult, QuantileGrid


@dataclass(frozen=True)
class ErrorBank:
    """Precomputed error-quantile shifts.

    ``shift[a, j, d]`` holds ``q_e(1 - levels[a])`` for step-ahead
    ``j+1`` and issue step-of-day ``d``; subtracting it from a point
    forecast gives the level-``levels[a]`` quantile. ``counts[j, d]``
    records how many training errors backed each cell (0 marks a
    pooled-fallback cell).
    """

    grid: QuantileGrid
    shift: np.ndarray
    counts: np.ndarray

    @property
    def horizon(self) -> int:
        return self.shift.shape[1]

    @property
    def steps_per_day(self) -> int:
        return self.shift.shape[2]

    def fan(self, mean: np.ndarray, issue_step_of_day: np.ndarray) -> np.ndarray:
        """Quantile fans (n_levels, n_rows, horizon) around point forecasts."""
        mean = np.asarray(mean, dtype=np.float64)
        d = np.asarray(issue_step_of_day, dtype=np.int64)
        if mean.ndim != 2 or mean.shape[1] != self.horizon:
            raise ConfigError("mean must be (n_rows, horizon) matching the bank")
        if d.shape != (mean.shape[0],):
            raise ConfigError("need one issue step-of-day per row")
        empty = self.counts[0, d] == 0
        if empty.any():
            warnings.warn(
                f"{int(empty.sum())} of {d.size} fan rows issue at steps of "
                "day with no banked training errors; those fans use pooled "
                "per-step-ahead quantiles",
                stacklevel=2,
            )
        # shift[:, :, d] -> (n_levels, horizon, n_rows)
        return mean[None] - np.moveaxis(self.shift[:, :, d], 2, 1)


def build_error_bank(
    errors: np.ndarray,
    issue_step_of_day: np.ndarray,
    steps_per_day: int,
    grid: QuantileGrid,
) -> ErrorBank:
    """Bank training errors and precompute quantile shifts per cell.

    ``errors`` is (n_rows, horizon) of prediction-minus-truth values on
    training samples; ``issue_step_of_day`` tags each row.
    """
    errors = np.asarray(errors, dtype=np.float64)
    d = np.asarray(issue_step_of_day, dtype=np.int64)
    if errors.ndim != 2 or errors.shape[0] < 1:
        raise DataError("need a non-empty (n_rows, horizon) error matrix")
    if d.shape != (errors.shape[0],):
        raise DataError("need one issue step-of-day per error row")
    if np.any(d < 0) or np.any(d >= steps_per_day):
        raise DataError("issue step-of-day out of range")
    horizon = errors.shape[1]
    probs = 1.0 - grid.levels
    shift = np.empty((grid.n_levels, horizon, steps_per_day))
    counts = np.zeros((horizon, steps_per_day), dtype=np.int64)
    pooled = np.quantile(errors, probs, axis=0)  # (n_levels, horizon)
    for sod in range(steps_per_day):
        rows = d == sod
        n = int(rows.sum())
        if n == 0:
            shift[:, :, sod] = pooled
            continue
        counts[:, sod] = n
        shift[:, :, sod] = np.quantile(errors[rows], probs, axis=0)
    return ErrorBank(grid, shift, counts)


def result_from_bank(
    bank: ErrorBank,
    mean: np.ndarray,
    issue_index: np.ndarray,
    steps_per_day: int,
) -> ForecastResult:
    """Wrap point forecasts and bank fans into a ForecastResult."""
    issue_index = np.asarray(issue_index, dtype=np.int64)
    sod = issue_index % steps_per_day
    return ForecastResult(bank.grid, mean, bank.fan(mean, sod), issue_index)
