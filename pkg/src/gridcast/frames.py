"""Uniformly sampled multivariate time series container.

A :class:`TimeSeriesFrame` holds named real-valued series (power,
weather, integer-coded calendar features) on a shared, gap-free
timestamp axis at a fixed step (10 minutes in the benchmark, 144 steps
per day). Frames are immutable after construction; all operations on
them are pure functions.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

SECONDS_PER_DAY = 86400


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Gap-free multivariate series sampled at a constant step.

    Parameters
    ----------
    timestamps : np.ndarray of datetime64[s]
        Strictly increasing instants at a constant step that divides a day.
    columns : dict mapping name -> float array
        Each array shares the timestamp axis. NaNs are rejected: gaps must
        be resolved during ingestion, before a frame is built.
    steps_per_day : int
        Must equal 86400 / step_seconds (144 at 10-minute resolution).
    """

    timestamps: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    steps_per_day: int = 144

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        if ts.ndim != 1 or ts.size < 2:
            raise DataError("frame needs at least two timestamps")
        deltas = np.diff(ts.astype("int64"))
        if deltas[0] <= 0 or not np.all(deltas == deltas[0]):
            raise DataError("timestamps must be strictly increasing with a constant step")
        step = int(deltas[0])
        if SECONDS_PER_DAY % step != 0:
            raise DataError(f"step of {step}s does not divide a day")
        if SECONDS_PER_DAY // step != self.steps_per_day:
            raise DataError(
                f"steps_per_day={self.steps_per_day} inconsistent with step of {step}s"
            )
        object.__setattr__(self, "timestamps", _freeze(ts))
        cols = {}
        for name, values in self.columns.items():
            v = np.asarray(values, dtype=np.float64)
            if v.shape != ts.shape:
                raise DataError(f"column {name!r} does not share the timestamp axis")
            if np.isnan(v).any():
                raise DataError(f"column {name!r} contains NaN; frames must be gap-free")
            cols[name] = _freeze(v)
        object.__setattr__(self, "columns", cols)

    @property
    def n_steps(self) -> int:
        return self.timestamps.size

    @property
    def n_days(self) -> int:
        return self.n_steps // self.steps_per_day

    @property
    def step_seconds(self) -> int:
        return SECONDS_PER_DAY // self.steps_per_day

    @property
    def column_names(self) -> list[str]:
        return list(self.columns)

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"unknown column {name!r}") from None

    def step_of_day(self) -> np.ndarray:
        """0-based position of each instant within its civil (UTC) day."""
        secs = self.timestamps.astype("int64") % SECONDS_PER_DAY
        return (secs // self.step_seconds).astype(np.int64)

    def day_of_week(self) -> np.ndarray:
        """0 = Monday ... 6 = Sunday, from the UTC calendar."""
        days = self.timestamps.astype("datetime64[D]").astype("int64")
        return (days + 3) % 7  # 1970-01-01 was a Thursday

    def with_columns(self, new: dict[str, np.ndarray]) -> "TimeSeriesFrame":
        """Return a copy extended (or overridden) with extra columns."""
        merged = dict(self.columns)
        merged.update(new)
        return TimeSeriesFrame(self.timestamps, merged, self.steps_per_day)

    def select(self, names: list[str]) -> "TimeSeriesFrame":
        return TimeSeriesFrame(
            self.timestamps, {n: self[n] for n in names}, self.steps_per_day
        )

    def slice_steps(self, start: int, stop: int) -> "TimeSeriesFrame":
        return TimeSeriesFrame(
            self.timestamps[start:stop],
            {n: v[start:stop] for n, v in self.columns.items()},
            self.steps_per_day,
        )

    def matrix(self, names: list[str]) -> np.ndarray:
        """Column-stack the named series into a (T, len(names)) matrix."""
        return np.column_stack([self[n] for n in names])


def add_calendar_features(
    frame: TimeSeriesFrame, holidays: list[str] | None = None
) -> TimeSeriesFrame:
    """Append integer-coded calendar columns derived from the timestamps.

    Adds ``step_of_day`` (0..steps_per_day-1), ``day_of_week`` (0=Monday)
    and a binary ``holiday`` flag. Holidays are given as ISO dates in the
    frame's civil (UTC) calendar; the benchmark treats local civil time as
    UTC throughout.
    """
    flags = np.zeros(frame.n_steps)
    if holidays:
        days = frame.timestamps.astype("datetime64[D]")
        holi = np.array(sorted(holidays), dtype="datetime64[D]")
        flags = np.isin(days, holi).astype(np.float64)
    return frame.with_columns(
        {
            "step_of_day": frame.step_of_day().astype(np.float64),
            "day_of_week": frame.day_of_week().astype(np.float64),
            "holiday": flags,
        }
    )
