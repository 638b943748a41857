"""Shared containers for probabilistic multi-step forecasts."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


def default_levels() -> np.ndarray:
    return np.linspace(0.05, 0.95, 11)


@dataclass(frozen=True)
class QuantileGrid:
    """Probability levels at which forecast fans are reported."""

    levels: np.ndarray = field(default_factory=default_levels)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        if lv.ndim != 1 or lv.size < 1:
            raise ConfigError("quantile grid must be a 1-D array")
        if np.any(lv <= 0.0) or np.any(lv >= 1.0):
            raise ConfigError("quantile levels must lie strictly inside (0, 1)")
        if np.any(np.diff(lv) <= 0.0):
            raise ConfigError("quantile levels must be strictly increasing")
        lv = lv.copy()
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def n_levels(self) -> int:
        return self.levels.size

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.levels + self.levels[::-1], 1.0, atol=1e-12))

    def index_of(self, alpha: float) -> int:
        hits = np.where(np.isclose(self.levels, alpha, atol=1e-9))[0]
        if hits.size != 1:
            raise ConfigError(f"level {alpha} is not on the grid")
        return int(hits[0])


@dataclass(frozen=True)
class ForecastResult:
    """Point forecasts and quantile fans for a set of issued samples.

    ``mean`` is (n_rows, horizon); ``quantiles`` stacks one such array
    per grid level, shape (n_levels, n_rows, horizon). ``issue_index``
    gives the frame instant each row was issued at.
    """

    grid: QuantileGrid
    mean: np.ndarray
    quantiles: np.ndarray
    issue_index: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        q = np.asarray(self.quantiles, dtype=np.float64)
        idx = np.asarray(self.issue_index, dtype=np.int64)
        if mean.ndim != 2:
            raise ConfigError("mean must be (n_rows, horizon)")
        if q.shape != (self.grid.n_levels,) + mean.shape:
            raise ConfigError(
                f"quantiles shape {q.shape} does not match "
                f"{(self.grid.n_levels,) + mean.shape}"
            )
        if idx.shape != (mean.shape[0],):
            raise ConfigError("issue_index must have one entry per row")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "quantiles", q)
        object.__setattr__(self, "issue_index", idx)

    @property
    def n_rows(self) -> int:
        return self.mean.shape[0]

    @property
    def horizon(self) -> int:
        return self.mean.shape[1]

    def quantile(self, alpha: float) -> np.ndarray:
        return self.quantiles[self.grid.index_of(alpha)]


def repair_crossings(quantiles: np.ndarray) -> np.ndarray:
    """Restore monotonicity across the level axis (axis 0) by sorting.

    Linear post-processing (reconciliation in particular) can make fan
    lines cross; sorting per (row, step) is the standard minimal repair
    and leaves already-monotone fans untouched.
    """
    return np.sort(np.asarray(quantiles, dtype=np.float64), axis=0)
