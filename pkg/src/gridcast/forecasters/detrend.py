"""Linear weather detrending for the recursive forecasters.

Smoothing-based models track level and seasonality but have no channel
for exogenous drivers, so the weather-explained part of the load is
removed first: a least-squares fit of the target on the aligned
forecast columns (plus an intercept) over training instants only. The
model then works on the residual series and forecasts are re-trended
with the same coefficients, using aligned forecast values at the
target instants, which were already known when the forecast was
issued.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..frames import TimeSeriesFrame


@dataclass(frozen=True)
class LinearDetrend:
    """Fitted map ``trend = X @ coef`` with an appended intercept column."""

    columns: tuple[str, ...]
    coef: np.ndarray

    def trend(self, frame: TimeSeriesFrame) -> np.ndarray:
        x = _design(frame, self.columns)
        return x @ self.coef

    def residual(self, frame: TimeSeriesFrame, target: str) -> np.ndarray:
        return frame[target] - self.trend(frame)


def _design(frame: TimeSeriesFrame, columns: tuple[str, ...]) -> np.ndarray:
    for c in columns:
        if c not in frame:
            raise DataError(f"detrend column {c!r} missing from frame")
    parts = [frame[c] for c in columns]
    parts.append(np.ones(frame.n_steps))
    return np.column_stack(parts)


def fit_detrend(
    frame: TimeSeriesFrame,
    target: str,
    columns: tuple[str, ...],
    step_mask: np.ndarray,
) -> LinearDetrend:
    """Least-squares trend fit restricted to the masked instants."""
    if target not in frame:
        raise DataError(f"detrend target {target!r} missing from frame")
    mask = np.asarray(step_mask, dtype=bool)
    if mask.shape != (frame.n_steps,) or not mask.any():
        raise DataError("detrend needs a non-empty step mask over the frame")
    x = _design(frame, columns)[mask]
    y = frame[target][mask]
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    return LinearDetrend(tuple(columns), coef)
