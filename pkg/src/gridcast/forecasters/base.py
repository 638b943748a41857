"""Interface every forecaster family implements toward the CV driver.

A forecaster is a small configuration object whose ``fit`` consumes a
:class:`FoldContext` (one cross-validation fold of one series) and
returns a fitted model exposing ``predict`` over embedded sample rows.
Regression-style families read the embedded design matrix; recursive
families read the raw series through the context and only use the row
indices to locate issue instants. Either way, fitting may touch
nothing outside the fold's training instants.
"""

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..embedding import SamplePair
from ..errors import ConfigError
from ..frames import TimeSeriesFrame


@dataclass(frozen=True)
class FoldContext:
    """Everything one fold of one target series exposes to a forecaster.

    ``pair`` is the full-series embedding; ``train_rows`` and
    ``test_rows`` index into it. ``train_step_mask`` marks the frame
    instants belonging to training days, which is what recursive models
    must restrict their state updates to. ``rng`` is dedicated to this
    (series, fold, method) combination so families draw independent,
    reproducible randomness.
    """

    frame: TimeSeriesFrame
    target: str
    pair: SamplePair
    train_rows: np.ndarray
    test_rows: np.ndarray
    train_step_mask: np.ndarray
    rng: np.random.Generator

    @property
    def horizon(self) -> int:
        return self.pair.horizon

    @property
    def steps_per_day(self) -> int:
        return self.frame.steps_per_day

    @property
    def order(self) -> int:
        return int(self.pair.issue_index[0])

    def issues(self, rows: np.ndarray) -> np.ndarray:
        return self.pair.issue_index[rows]

    def targets(self, rows: np.ndarray) -> np.ndarray:
        return self.pair.y[rows]

    def validate(self) -> None:
        if self.target not in self.frame:
            raise ConfigError(f"frame has no target column {self.target!r}")
        if self.train_rows.size == 0:
            raise ConfigError("fold has no training samples")
        if self.train_step_mask.shape != (self.frame.n_steps,):
            raise ConfigError("train step mask must cover the frame")


@runtime_checkable
class FittedModel(Protocol):
    def predict(self, ctx: FoldContext, rows: np.ndarray) -> np.ndarray:
        """Point forecasts (len(rows), horizon) for embedded sample rows."""


@runtime_checkable
class Forecaster(Protocol):
    name: str

    def fit(self, ctx: FoldContext) -> FittedModel: ...
