"""Causal lag embedding of a series and its regressors.

Forecasting is cast as supervised regression on Hankel-structured
samples. For an embedding order ``e`` and horizon ``h``, a sample
issued at instant ``t`` sees the last ``e`` values of each lagged
regressor (the window ``t-e+1 .. t``), point-in-time calendar codes at
``t``, and, for weather inputs known in advance, their ``h`` future
values ``t+1 .. t+h``. The regression target is the future trajectory
``y[t+1 .. t+h]``. A series of length ``T`` yields ``T - e - h``
samples with issue instants ``t = e .. T-h-1``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError
from .frames import TimeSeriesFrame


@dataclass(frozen=True)
class EmbeddingSpec:
    """Feature map configuration for :func:`hankel_embed`.

    Parameters
    ----------
    order : int
        Number of past instants per lagged regressor (includes the issue
        instant itself).
    horizon : int
        Number of future instants to predict per sample.
    target : str
        Column to predict; it is always embedded as a lagged regressor.
    lagged : tuple of str
        Further columns embedded as lag windows.
    point : tuple of str
        Columns read only at the issue instant (calendar codes).
    future : tuple of str
        Columns whose ``horizon`` future values are features (weather
        forecasts, already aligned to what was known at issue time).
    """

    order: int = 144
    horizon: int = 144
    target: str = "y"
    lagged: tuple[str, ...] = ()
    point: tuple[str, ...] = ()
    future: tuple[str, ...] = ()

    def __post_init__(self):
        if self.order < 1 or self.horizon < 1:
            raise ConfigError("embedding order and horizon must be positive")
        if self.target in self.lagged:
            raise ConfigError("target is embedded implicitly; do not list it as lagged")

    @property
    def n_features(self) -> int:
        n_lagged = 1 + len(self.lagged)
        return n_lagged * self.order + len(self.point) + len(self.future) * self.horizon

    def feature_names(self) -> list[str]:
        names = []
        for col in (self.target, *self.lagged):
            names.extend(f"{col}.lag{self.order - 1 - j}" for j in range(self.order))
        names.extend(self.point)
        for col in self.future:
            names.extend(f"{col}.lead{k}" for k in range(1, self.horizon + 1))
        return names


@dataclass(frozen=True)
class SamplePair:
    """Embedded design matrix and targets, plus the issue instants.

    ``x`` is (n_samples, n_features), ``y`` is (n_samples, horizon) and
    ``issue_index[i]`` is the 0-based frame row at which sample ``i`` is
    issued. Row ``i`` of ``y`` holds the instants ``issue_index[i]+1 ..
    issue_index[i]+horizon``.
    """

    x: np.ndarray
    y: np.ndarray
    issue_index: np.ndarray
    feature_names: tuple[str, ...] = field(repr=False)

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def horizon(self) -> int:
        return self.y.shape[1]

    def take(self, rows: np.ndarray) -> "SamplePair":
        """Row-subset view used to materialize folds."""
        return SamplePair(
            self.x[rows], self.y[rows], self.issue_index[rows], self.feature_names
        )


def hankel_embed(frame: TimeSeriesFrame, spec: EmbeddingSpec) -> SamplePair:
    """Embed a frame into supervised samples per ``spec``.

    Lag blocks come first (target, then ``spec.lagged``, each oldest
    instant first), then point-in-time columns, then future blocks in
    lead order. All referenced columns must exist in the frame.
    """
    e, h = spec.order, spec.horizon
    t_len = frame.n_steps
    n = t_len - e - h
    if n < 1:
        raise DataError(
            f"series of {t_len} steps is too short for order {e} and horizon {h}"
        )
    for col in (spec.target, *spec.lagged, *spec.point, *spec.future):
        if col not in frame:
            raise DataError(f"embedding references missing column {col!r}")

    blocks = []
    for col in (spec.target, *spec.lagged):
        # window for issue t is v[t-e+1 .. t]; t runs e .. T-h-1
        blocks.append(sliding_window_view(frame[col], e)[1 : n + 1])
    issue = np.arange(e, t_len - h)
    for col in spec.point:
        blocks.append(frame[col][issue, None])
    for col in spec.future:
        blocks.append(sliding_window_view(frame[col], h)[e + 1 : n + e + 1])
    x = np.ascontiguousarray(np.hstack(blocks))
    y = np.ascontiguousarray(sliding_window_view(frame[spec.target], h)[e + 1 : n + e + 1])
    return SamplePair(x, y, issue, tuple(spec.feature_names()))
