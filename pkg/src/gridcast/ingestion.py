"""Raw meter and weather-forecast ingestion.

Field data arrives as wide tables of 10-minute meter readings with
gaps, occasional polarity mistakes from swapped current transformers,
and a separate feed of numerical weather forecasts issued a few times
per day. This module turns that into the strict, gap-free
:class:`~gridcast.frames.TimeSeriesFrame` the rest of the package
consumes, and keeps an auditable report of every repair.

Weather forecasts are never used beyond what was available at issue
time: :func:`align_nwp` resolves, for each instant, the freshest
issuance at least ``guard_steps`` old, so downstream feature builders
can treat the aligned columns as known over the whole forecast window.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, DataError
from .frames import SECONDS_PER_DAY, TimeSeriesFrame


@dataclass
class RawMeterTable:
    """Wide meter table on a regular axis; NaN marks missing readings."""

    timestamps: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        if ts.ndim != 1 or ts.size < 2:
            raise DataError("meter table needs at least two timestamps")
        deltas = np.diff(ts.astype("int64"))
        if deltas[0] <= 0 or not np.all(deltas == deltas[0]):
            raise DataError("meter timestamps must be regular and increasing")
        self.timestamps = ts
        cols = {}
        for name, values in self.columns.items():
            v = np.asarray(values, dtype=np.float64)
            if v.shape != ts.shape:
                raise DataError(f"meter column {name!r} length mismatch")
            cols[name] = v
        self.columns = cols

    @property
    def step_seconds(self) -> int:
        return int(np.diff(self.timestamps[:2].astype("int64"))[0])

    @property
    def n_steps(self) -> int:
        return self.timestamps.size

    @property
    def meter_names(self) -> list[str]:
        return list(self.columns)


@dataclass
class CleaningReport:
    """What ingestion did to the raw table, meter by meter."""

    kept: list[str] = field(default_factory=list)
    dropped: dict[str, str] = field(default_factory=dict)
    filled_steps: dict[str, int] = field(default_factory=dict)
    longest_gap: dict[str, int] = field(default_factory=dict)
    sign_corrections: list[dict] = field(default_factory=list)
    span: tuple[str, str] | None = None

    def as_dict(self) -> dict:
        return {
            "kept": sorted(self.kept),
            "dropped": dict(sorted(self.dropped.items())),
            "filled_steps": dict(sorted(self.filled_steps.items())),
            "longest_gap": dict(sorted(self.longest_gap.items())),
            "sign_corrections": self.sign_corrections,
            "span": list(self.span) if self.span else None,
        }


def _nan_runs(values: np.ndarray) -> list[tuple[int, int]]:
    """Half-open (start, stop) index ranges of consecutive NaNs."""
    isnan = np.isnan(values)
    if not isnan.any():
        return []
    edges = np.diff(isnan.astype(np.int8))
    starts = list(np.where(edges == 1)[0] + 1)
    stops = list(np.where(edges == -1)[0] + 1)
    if isnan[0]:
        starts.insert(0, 0)
    if isnan[-1]:
        stops.append(values.size)
    return list(zip(starts, stops))


def select_meters(
    raw: RawMeterTable,
    max_gap_steps: int = 6,
    min_valid_days: int = 365,
    report: CleaningReport | None = None,
) -> RawMeterTable:
    """Drop meters whose record cannot be repaired credibly.

    A meter is discarded when any interior gap exceeds ``max_gap_steps``
    consecutive readings, or when it holds fewer than ``min_valid_days``
    worth of valid samples. Leading and trailing missing stretches do
    not count as gaps (the common span is trimmed later); they do count
    against the valid-sample total.
    """
    report = report if report is not None else CleaningReport()
    steps_per_day = SECONDS_PER_DAY // raw.step_seconds
    kept = {}
    for name, values in raw.columns.items():
        runs = _nan_runs(values)
        interior = [r for r in runs if r[0] > 0 and r[1] < values.size]
        longest = max((b - a for a, b in interior), default=0)
        report.longest_gap[name] = longest
        valid = int(np.sum(~np.isnan(values)))
        if longest > max_gap_steps:
            report.dropped[name] = f"gap of {longest} steps exceeds {max_gap_steps}"
        elif valid < min_valid_days * steps_per_day:
            report.dropped[name] = (
                f"only {valid} valid samples, need {min_valid_days} days"
            )
        else:
            kept[name] = values
            report.kept.append(name)
    if not kept:
        raise DataError("no meter survived selection")
    return RawMeterTable(raw.timestamps, kept)


def trim_to_common_span(
    raw: RawMeterTable, report: CleaningReport | None = None
) -> RawMeterTable:
    """Cut to the longest range where every meter has leading/trailing data.

    The result may still contain interior gaps; it no longer has edge
    NaNs, so PCHIP filling has anchor points on both sides.
    """
    first = 0
    last = raw.n_steps
    for values in raw.columns.values():
        valid = np.where(~np.isnan(values))[0]
        if valid.size == 0:
            raise DataError("a meter column is entirely missing")
        first = max(first, int(valid[0]))
        last = min(last, int(valid[-1]) + 1)
    if last - first < 2:
        raise DataError("meters share no common span")
    out = RawMeterTable(
        raw.timestamps[first:last],
        {n: v[first:last] for n, v in raw.columns.items()},
    )
    if report is not None:
        report.span = (str(out.timestamps[0]), str(out.timestamps[-1]))
    return out


def fill_gaps_pchip(
    raw: RawMeterTable, report: CleaningReport | None = None
) -> RawMeterTable:
    """Fill interior gaps with shape-preserving cubic interpolation.

    Monotone (PCHIP) interpolation avoids the overshoot plain cubic
    splines produce on load ramps. Edge NaNs cannot be filled and raise
    :class:`DataError`; trim the table first.
    """
    filled = {}
    for name, values in raw.columns.items():
        isnan = np.isnan(values)
        if not isnan.any():
            filled[name] = values
            if report is not None:
                report.filled_steps.setdefault(name, 0)
            continue
        if isnan[0] or isnan[-1]:
            raise DataError(
                f"meter {name!r} has edge gaps; trim to the common span first"
            )
        idx = np.arange(values.size)
        interp = PchipInterpolator(idx[~isnan], values[~isnan])
        out = values.copy()
        out[isnan] = interp(idx[isnan])
        filled[name] = out
        if report is not None:
            report.filled_steps[name] = int(isnan.sum())
    return RawMeterTable(raw.timestamps, filled)


@dataclass(frozen=True)
class SignCorrection:
    """Flip the polarity of one meter over [start, stop)."""

    meter: str
    start: str
    stop: str


def apply_sign_corrections(
    raw: RawMeterTable,
    corrections: list[SignCorrection],
    report: CleaningReport | None = None,
) -> RawMeterTable:
    """Negate the listed meter readings over the given time ranges.

    Corrections are an explicit, reviewed input: polarity mistakes come
    from swapped transformer wiring and must be confirmed by a human.
    Applying the same correction twice restores the original values.
    """
    cols = {n: v.copy() for n, v in raw.columns.items()}
    for c in corrections:
        if c.meter not in cols:
            raise ConfigError(f"sign correction for unknown meter {c.meter!r}")
        lo = np.datetime64(c.start, "s")
        hi = np.datetime64(c.stop, "s")
        if hi <= lo:
            raise ConfigError("sign correction range is empty")
        mask = (raw.timestamps >= lo) & (raw.timestamps < hi)
        cols[c.meter][mask] = -cols[c.meter][mask]
        if report is not None:
            report.sign_corrections.append(
                {"meter": c.meter, "start": c.start, "stop": c.stop,
                 "steps": int(mask.sum())}
            )
    return RawMeterTable(raw.timestamps, cols)


def detect_sign_flips(raw: RawMeterTable, window_days: int = 7) -> list[dict]:
    """Flag windows whose mean is negative on a mostly-positive meter.

    Purely advisory: returns candidate ranges for human review and
    never modifies data. Consumption meters read positive, so a
    sustained negative weekly mean is the signature of swapped polarity.
    """
    steps = window_days * (SECONDS_PER_DAY // raw.step_seconds)
    findings = []
    for name, values in raw.columns.items():
        overall = np.nanmean(values)
        if overall <= 0:
            continue
        for start in range(0, values.size - steps + 1, steps):
            chunk = values[start : start + steps]
            if np.all(np.isnan(chunk)):
                continue
            if np.nanmean(chunk) < -0.1 * overall:
                findings.append(
                    {
                        "meter": name,
                        "start": str(raw.timestamps[start]),
                        "stop": str(
                            raw.timestamps[min(start + steps, raw.n_steps - 1)]
                        ),
                        "window_mean": float(np.nanmean(chunk)),
                    }
                )
    return findings


def to_frame(raw: RawMeterTable, steps_per_day: int = 144) -> TimeSeriesFrame:
    """Promote a fully repaired table to a strict frame."""
    return TimeSeriesFrame(raw.timestamps, raw.columns, steps_per_day)


@dataclass(frozen=True)
class NwpTable:
    """Numerical weather forecasts, one row per issuance.

    ``variables[name][k, l]`` is the forecast issued at
    ``issue_times[k]`` for the instant ``issue_times[k] +
    lead_hours[l]`` hours. Leads are an hourly (or coarser) grid; the
    alignment step interpolates them down to the load resolution.
    """

    issue_times: np.ndarray
    lead_hours: np.ndarray
    variables: dict[str, np.ndarray]

    def __post_init__(self):
        it = np.asarray(self.issue_times, dtype="datetime64[s]")
        lh = np.asarray(self.lead_hours, dtype=np.float64)
        if it.ndim != 1 or np.any(np.diff(it.astype("int64")) <= 0):
            raise DataError("NWP issue times must be strictly increasing")
        if lh.ndim != 1 or lh.size < 2 or np.any(np.diff(lh) <= 0):
            raise DataError("NWP lead grid must be increasing with >= 2 points")
        object.__setattr__(self, "issue_times", it)
        object.__setattr__(self, "lead_hours", lh)
        out = {}
        for name, values in self.variables.items():
            v = np.asarray(values, dtype=np.float64)
            if v.shape != (it.size, lh.size):
                raise DataError(f"NWP variable {name!r} has shape {v.shape}, "
                                f"expected {(it.size, lh.size)}")
            if np.isnan(v).any():
                raise DataError(f"NWP variable {name!r} contains NaN")
            out[name] = v
        object.__setattr__(self, "variables", out)

    @property
    def variable_names(self) -> list[str]:
        return list(self.variables)


def align_nwp(
    nwp: NwpTable,
    frame: TimeSeriesFrame,
    guard_steps: int = 0,
    variables: list[str] | None = None,
) -> dict[str, np.ndarray]:
    """Resolve, per frame instant, the freshest usable forecast value.

    For instant ``s`` the usable issuances are those issued at or
    before ``s - guard_steps``. With ``guard_steps`` no smaller than
    the forecast horizon, a feature builder may read aligned values at
    ``t+1 .. t+horizon`` for a sample issued at ``t`` without ever
    touching a forecast that was not yet available at ``t``.

    Returns one step-resolution array per variable. Raises
    :class:`DataError` when the table does not cover the span.
    """
    names = variables if variables is not None else nwp.variable_names
    for name in names:
        if name not in nwp.variables:
            raise DataError(f"NWP table has no variable {name!r}")
    ts = frame.timestamps.astype("int64")
    guard_sec = guard_steps * frame.step_seconds
    issue = nwp.issue_times.astype("int64")
    # freshest issuance at or before ts - guard
    k = np.searchsorted(issue, ts - guard_sec, side="right") - 1
    if k[0] < 0:
        raise DataError(
            "NWP issuances start too late to cover the span with this guard"
        )
    lead_h = (ts - issue[k]) / 3600.0
    if np.any(lead_h > nwp.lead_hours[-1]):
        raise DataError("NWP lead coverage too short for the issuance cadence")
    aligned = {name: np.empty(ts.size) for name in names}
    for kk in np.unique(k):
        rows = k == kk
        for name in names:
            aligned[name][rows] = np.interp(
                lead_h[rows], nwp.lead_hours, nwp.variables[name][kk]
            )
    return aligned


def load_meter_csv(path, timestamp_column: str = "timestamp") -> RawMeterTable:
    """Read a wide CSV (timestamp column plus one column per meter)."""
    df = pd.read_csv(path)
    if timestamp_column not in df.columns:
        raise DataError(f"CSV has no {timestamp_column!r} column")
    ts = pd.to_datetime(df[timestamp_column]).to_numpy().astype("datetime64[s]")
    cols = {
        str(c): df[c].to_numpy(dtype=np.float64)
        for c in df.columns
        if c != timestamp_column
    }
    if not cols:
        raise DataError("CSV holds no meter columns")
    return RawMeterTable(ts, cols)


def save_meter_csv(raw: RawMeterTable, path) -> None:
    df = pd.DataFrame({"timestamp": raw.timestamps.astype("datetime64[s]")})
    for name, values in raw.columns.items():
        df[name] = values
    df.to_csv(path, index=False)


def load_nwp_csv(path) -> NwpTable:
    """Read a long CSV with issue_time, lead_hours, variable, value."""
    df = pd.read_csv(path)
    needed = {"issue_time", "lead_hours", "variable", "value"}
    if not needed <= set(df.columns):
        raise DataError(f"NWP CSV must have columns {sorted(needed)}")
    df["issue_time"] = pd.to_datetime(df["issue_time"])
    issues = np.sort(df["issue_time"].unique()).astype("datetime64[s]")
    leads = np.sort(df["lead_hours"].unique()).astype(np.float64)
    variables = {}
    for name, g in df.groupby("variable"):
        pivot = g.pivot_table(
            index="issue_time", columns="lead_hours", values="value"
        ).reindex(index=pd.DatetimeIndex(issues), columns=leads)
        values = pivot.to_numpy(dtype=np.float64)
        if np.isnan(values).any():
            raise DataError(f"NWP variable {name!r} misses (issue, lead) cells")
        variables[str(name)] = values
    return NwpTable(issues, leads, variables)


def save_nwp_csv(nwp: NwpTable, path) -> None:
    rows = []
    for name, values in nwp.variables.items():
        for k, it in enumerate(nwp.issue_times):
            for l, lead in enumerate(nwp.lead_hours):
                rows.append((str(it), float(lead), name, values[k, l]))
    pd.DataFrame(
        rows, columns=["issue_time", "lead_hours", "variable", "value"]
    ).to_csv(path, index=False)


def ingest_meters(
    raw: RawMeterTable,
    corrections: list[SignCorrection] | None = None,
    max_gap_steps: int = 6,
    min_valid_days: int = 365,
    steps_per_day: int = 144,
) -> tuple[TimeSeriesFrame, CleaningReport]:
    """Full repair pipeline: corrections, selection, trim, fill, freeze.

    Also trims the result to whole civil days so downstream day-aligned
    cross-validation starts at midnight.
    """
    report = CleaningReport()
    if corrections:
        raw = apply_sign_corrections(raw, corrections, report)
    raw = select_meters(raw, max_gap_steps, min_valid_days, report)
    raw = trim_to_common_span(raw, report)
    raw = fill_gaps_pchip(raw, report)
    ts = raw.timestamps.astype("int64")
    step = raw.step_seconds
    lead = int((-ts[0]) % SECONDS_PER_DAY) // step
    n_full = (raw.n_steps - lead) // (SECONDS_PER_DAY // step) * (
        SECONDS_PER_DAY // step
    )
    if n_full <= 0:
        raise DataError("no whole civil day remains after trimming")
    if lead or n_full != raw.n_steps - lead:
        warnings.warn(
            f"trimming {lead} leading and "
            f"{raw.n_steps - lead - n_full} trailing steps to day boundaries",
            stacklevel=2,
        )
    raw = RawMeterTable(
        raw.timestamps[lead : lead + n_full],
        {n: v[lead : lead + n_full] for n, v in raw.columns.items()},
    )
    report.span = (str(raw.timestamps[0]), str(raw.timestamps[-1]))
    return to_frame(raw, steps_per_day), report
