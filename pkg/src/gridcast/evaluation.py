"""Deterministic and probabilistic forecast scoring.

Point forecasts are scored on (step-of-day, step-ahead) KPI surfaces:
each cell collects the test errors of forecasts issued at that step of
the day for that step ahead, reduced per cross-validation fold first
and then averaged across folds. Surfaces are normalized elementwise
against the persistence forecaster, averaged over the day into horizon
profiles, and condensed into per-series summary scores.

Probabilistic forecasts are scored by the mean pinball loss per
quantile level and its integral over levels (the quantile score),
with per-step-ahead curves for plotting.

Cells with no observations are marked ``NaN`` and excluded from every
aggregate; observation counts are carried alongside the values.
"""

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError
from .forecasters.results import QuantileGrid

__all__ = [
    "KpiMatrix",
    "QuantileScoreReport",
    "rmse_map",
    "mape_map",
    "pinball_loss",
    "quantile_score",
    "normalize_map",
    "horizon_profiles",
    "exceedance_mask",
    "summary_scores",
    "summary_table",
    "relative_reduction_profile",
    "bin_by_steps",
    "save_kpi_map_csv",
    "save_columns_csv",
    "save_json_summary",
]

MAPE_FLOOR_KW = 0.1


@dataclass(frozen=True)
class KpiMatrix:
    """KPI surface over (step of day of issue, step ahead).

    ``values[d, j]`` scores forecasts issued at step-of-day ``d`` for
    ``j + 1`` steps ahead; ``counts`` holds the number of test
    observations behind each cell (all folds pooled). Empty cells are
    ``NaN``. ``excluded`` tallies observations dropped by a validity
    floor (percentage errors near zero actuals).
    """

    values: np.ndarray
    counts: np.ndarray
    metric: str
    units: str
    normalized: bool = False
    excluded: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        c = np.asarray(self.counts, dtype=np.int64)
        if v.ndim != 2 or c.shape != v.shape:
            raise ConfigError("values and counts must be matching 2-D arrays")
        if np.isinf(v).any():
            raise ConfigError("KPI values must be finite or NaN")
        if (c < 0).any():
            raise ConfigError("counts must be nonnegative")
        if np.isnan(v[c > 0]).any():
            raise ConfigError("populated cells must have finite values")
        v = v.copy()
        v.setflags(write=False)
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "counts", c)

    @property
    def steps_per_day(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def n_missing_cells(self) -> int:
        return int(np.isnan(self.values).sum())


def _check_grouping(
    per_obs: np.ndarray,
    issue_step_of_day: np.ndarray,
    fold_of_rows: np.ndarray,
    steps_per_day: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.asarray(per_obs, dtype=np.float64)
    d = np.asarray(issue_step_of_day, dtype=np.int64)
    f = np.asarray(fold_of_rows, dtype=np.int64)
    if x.ndim != 2:
        raise ConfigError("per-observation values must be (n_rows, horizon)")
    if d.shape != (x.shape[0],) or f.shape != (x.shape[0],):
        raise ConfigError("need one step-of-day and one fold id per row")
    if x.shape[0] == 0:
        raise DataError("no rows to score")
    if steps_per_day < 1:
        raise ConfigError("steps_per_day must be positive")
    if (d < 0).any() or (d >= steps_per_day).any():
        raise ConfigError("issue step-of-day out of range")
    return x, d, f


def _fold_mean_map(
    per_obs: np.ndarray,
    obs_mask: np.ndarray,
    sod: np.ndarray,
    folds: np.ndarray,
    steps_per_day: int,
    per_fold_transform,
) -> tuple[np.ndarray, np.ndarray]:
    """Within-cell mean per fold (transformed), then mean over folds.

    Returns (values with NaN for never-populated cells, total counts).
    """
    horizon = per_obs.shape[1]
    acc = np.zeros((steps_per_day, horizon))
    n_folds = np.zeros((steps_per_day, horizon), dtype=np.int64)
    total = np.zeros((steps_per_day, horizon), dtype=np.int64)
    for fold in np.unique(folds):
        rows = folds == fold
        sums = np.zeros((steps_per_day, horizon))
        cnt = np.zeros((steps_per_day, horizon))
        np.add.at(sums, sod[rows], np.where(obs_mask[rows], per_obs[rows], 0.0))
        np.add.at(cnt, sod[rows], obs_mask[rows].astype(np.float64))
        filled = cnt > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = per_fold_transform(sums / cnt)
        acc[filled] += stat[filled]
        n_folds[filled] += 1
        total += cnt.astype(np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = acc / n_folds
    values[n_folds == 0] = np.nan
    return values, total


def rmse_map(
    errors: np.ndarray,
    issue_step_of_day: np.ndarray,
    fold_of_rows: np.ndarray,
    steps_per_day: int,
) -> KpiMatrix:
    """Root-mean-square error per cell, root taken inside the fold mean.

    ``errors`` is (n_rows, horizon) of prediction-minus-truth values on
    test samples. Each fold contributes the within-cell RMSE; the map
    averages those over the folds where the cell is populated.
    """
    e, d, f = _check_grouping(errors, issue_step_of_day, fold_of_rows, steps_per_day)
    if not np.isfinite(e).all():
        raise DataError("errors contain non-finite values")
    mask = np.ones(e.shape, dtype=bool)
    values, counts = _fold_mean_map(e**2, mask, d, f, steps_per_day, np.sqrt)
    return KpiMatrix(values, counts, "rmse", "kW")


def mape_map(
    errors: np.ndarray,
    actuals: np.ndarray,
    issue_step_of_day: np.ndarray,
    fold_of_rows: np.ndarray,
    steps_per_day: int,
    floor: float = MAPE_FLOOR_KW,
) -> KpiMatrix:
    """Mean absolute percentage error per cell, in percent.

    Observations whose actual magnitude falls below ``floor`` are
    excluded and tallied in the result's ``excluded`` field; percentage
    errors blow up near zero and the bottom series do touch zero.
    """
    e, d, f = _check_grouping(errors, issue_step_of_day, fold_of_rows, steps_per_day)
    y = np.asarray(actuals, dtype=np.float64)
    if y.shape != e.shape:
        raise ConfigError("actuals must align with errors")
    if not np.isfinite(e).all() or not np.isfinite(y).all():
        raise DataError("errors and actuals must be finite")
    mask = np.abs(y) >= floor
    excluded = int((~mask).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(mask, np.abs(e) / y, 0.0)
    values, counts = _fold_mean_map(
        ratio, mask, d, f, steps_per_day, lambda cell: cell
    )
    return KpiMatrix(100.0 * values, counts, "mape", "%", excluded=excluded)


def pinball_loss(q_hat: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    """Quantile (pinball) loss, elementwise: eps * (1{eps >= 0} - alpha)."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie strictly inside (0, 1)")
    eps = np.asarray(q_hat, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return eps * ((eps >= 0.0).astype(np.float64) - alpha)


@dataclass(frozen=True)
class QuantileScoreReport:
    """Mean pinball losses and their integral over quantile levels.

    ``mean_loss[a]`` is the average pinball loss of the level
    ``levels[a]`` line over all observations; ``qs`` integrates it over
    levels (trapezoid on the grid rescaled to the unit interval, so it
    is a weighted average of ``mean_loss``); ``qs_per_step`` resolves
    the same integral per step ahead.
    """

    levels: np.ndarray
    mean_loss: np.ndarray
    qs: float
    qs_per_step: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=np.float64)
        ml = np.asarray(self.mean_loss, dtype=np.float64)
        ps = np.asarray(self.qs_per_step, dtype=np.float64)
        if lv.ndim != 1 or ml.shape != lv.shape or ps.ndim != 1:
            raise ConfigError("malformed quantile-score report arrays")
        if not self.normalized and (np.nan_to_num(ml) < -1e-12).any():
            raise ConfigError("pinball losses cannot be negative")
        for name, arr in (("levels", lv), ("mean_loss", ml), ("qs_per_step", ps)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def normalized_by(self, baseline: "QuantileScoreReport") -> "QuantileScoreReport":
        """Ratio report against a baseline (typically persistence)."""
        if baseline.levels.shape != self.levels.shape or not np.allclose(
            baseline.levels, self.levels
        ):
            raise ConfigError("baseline report uses a different level grid")
        if baseline.qs_per_step.shape != self.qs_per_step.shape:
            raise ConfigError("baseline report has a different horizon")
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_loss = self.mean_loss / baseline.mean_loss
            per_step = self.qs_per_step / baseline.qs_per_step
            qs = self.qs / baseline.qs if baseline.qs != 0.0 else np.nan
        return QuantileScoreReport(
            self.levels,
            np.where(np.isfinite(mean_loss), mean_loss, np.nan),
            float(qs),
            np.where(np.isfinite(per_step), per_step, np.nan),
            normalized=True,
        )


def _quadrature(levels: np.ndarray, loss: np.ndarray) -> np.ndarray:
    """Integrate loss over levels rescaled to [0, 1]; axis 0 is levels."""
    if levels.size == 1:
        return loss[0]
    x = (levels - levels[0]) / (levels[-1] - levels[0])
    return np.trapezoid(loss, x, axis=0)


def quantile_score(
    quantiles: np.ndarray,
    actuals: np.ndarray,
    levels,
) -> QuantileScoreReport:
    """Score a quantile fan against observations.

    ``quantiles`` is (n_levels, n_rows, horizon) and ``actuals``
    (n_rows, horizon). ``levels`` is a QuantileGrid or a 1-D array of
    probabilities; it is sorted internally, so reversed grids score
    identically.
    """
    if isinstance(levels, QuantileGrid):
        lv = levels.levels
    else:
        lv = np.asarray(levels, dtype=np.float64)
    if lv.ndim != 1 or lv.size < 1 or (lv <= 0).any() or (lv >= 1).any():
        raise ConfigError("levels must be probabilities strictly inside (0, 1)")
    q = np.asarray(quantiles, dtype=np.float64)
    y = np.asarray(actuals, dtype=np.float64)
    if y.ndim != 2 or q.shape != (lv.size,) + y.shape:
        raise ConfigError(
            f"quantiles shape {q.shape} does not match levels and actuals "
            f"{(lv.size,) + y.shape}"
        )
    order = np.argsort(lv)
    lv = lv[order]
    q = q[order]
    if (np.diff(lv) <= 0).any():
        raise ConfigError("levels must be distinct")
    # loss[a, r, j], averaged over rows -> (n_levels, horizon)
    eps = q - y[None]
    loss = eps * ((eps >= 0.0).astype(np.float64) - lv[:, None, None])
    loss_per_step = loss.mean(axis=1)
    mean_loss = loss_per_step.mean(axis=1)
    qs_per_step = _quadrature(lv, loss_per_step)
    qs = float(_quadrature(lv, mean_loss))
    return QuantileScoreReport(lv, mean_loss, qs, np.atleast_1d(qs_per_step))


def normalize_map(raw: KpiMatrix, baseline: KpiMatrix) -> KpiMatrix:
    """Elementwise ratio of a KPI surface to a baseline surface.

    Cells missing in either input, or with a zero baseline, come out
    missing; counts keep the raw map's counts on surviving cells.
    """
    if raw.normalized or baseline.normalized:
        raise ConfigError("normalize_map expects raw (unnormalized) maps")
    if raw.values.shape != baseline.values.shape:
        raise ConfigError("maps have different shapes")
    if raw.metric != baseline.metric:
        raise ConfigError("cannot normalize across different metrics")
    with np.errstate(invalid="ignore", divide="ignore"):
        values = raw.values / baseline.values
    good = np.isfinite(values)
    values = np.where(good, values, np.nan)
    counts = np.where(good, raw.counts, 0)
    return KpiMatrix(
        values, counts, raw.metric, "1", normalized=True, excluded=raw.excluded
    )


def horizon_profiles(kpi: KpiMatrix) -> np.ndarray:
    """Average the surface over step-of-day: one value per step ahead.

    Cells that are missing are excluded; a step ahead with no populated
    cell at all yields NaN.
    """
    values = kpi.values
    filled = ~np.isnan(values)
    sums = np.where(filled, values, 0.0).sum(axis=0)
    n = filled.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        profile = sums / n
    profile[n == 0] = np.nan
    return profile


def exceedance_mask(kpi: KpiMatrix) -> np.ndarray:
    """Cells where the normalized KPI reaches 1 (baseline wins or ties).

    Missing cells are False. Only meaningful for normalized maps.
    """
    if not kpi.normalized:
        raise ConfigError("exceedance mask needs a normalized map")
    with np.errstate(invalid="ignore"):
        return np.nan_to_num(kpi.values, nan=-np.inf) >= 1.0


def grand_mean(kpi: KpiMatrix) -> float:
    """Mean over all populated cells of the surface."""
    values = kpi.values[~np.isnan(kpi.values)]
    if values.size == 0:
        raise DataError("the KPI surface has no populated cells")
    return float(values.mean())


def summary_scores(
    maps: dict, top_series: str, bottom_series: list
) -> dict:
    """Aggregate-series score and bottom-series average for one metric.

    ``maps`` holds one KpiMatrix per series name. Returns a dict with
    ``aggregate`` (grand mean of the top series map) and
    ``bottom_average`` (mean of the bottom series' grand means).
    """
    if top_series not in maps:
        raise ConfigError(f"missing map for top series {top_series!r}")
    missing = [s for s in bottom_series if s not in maps]
    if missing:
        raise ConfigError(f"missing maps for bottom series {missing}")
    if not bottom_series:
        raise ConfigError("need at least one bottom series")
    bottom = [grand_mean(maps[s]) for s in bottom_series]
    return {
        "aggregate": grand_mean(maps[top_series]),
        "bottom_average": float(np.mean(bottom)),
    }


def summary_table(
    per_method_maps: dict, top_series: str, bottom_series: list
) -> dict:
    """Summary scores per method: {method: {aggregate, bottom_average}}."""
    return {
        method: summary_scores(maps, top_series, bottom_series)
        for method, maps in per_method_maps.items()
    }


def relative_reduction_profile(
    base: KpiMatrix, reconciled: KpiMatrix
) -> np.ndarray:
    """Per-step-ahead relative improvement: 1 - reconciled / base.

    Both maps are averaged over the day first; positive values mean the
    reconciled forecasts score lower (better) than the base ones.
    """
    if base.metric != reconciled.metric or base.normalized != reconciled.normalized:
        raise ConfigError("maps must share metric and normalization")
    if base.values.shape != reconciled.values.shape:
        raise ConfigError("maps have different shapes")
    base_profile = horizon_profiles(base)
    rec_profile = horizon_profiles(reconciled)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = rec_profile / base_profile
    return 1.0 - np.where(np.isfinite(ratio), ratio, np.nan)


def bin_by_steps(values: np.ndarray, bin_steps: int) -> np.ndarray:
    """Mean over consecutive groups of ``bin_steps`` entries.

    NaN entries are excluded per bin; 4-hour bins at 10-minute
    resolution are 24 steps. A short final group is averaged as-is.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigError("binning expects a 1-D profile")
    if bin_steps < 1:
        raise ConfigError("bin_steps must be positive")
    out = []
    for start in range(0, v.size, bin_steps):
        chunk = v[start : start + bin_steps]
        filled = ~np.isnan(chunk)
        out.append(chunk[filled].mean() if filled.any() else np.nan)
    return np.array(out)


def save_kpi_map_csv(path, kpi: KpiMatrix, what: str = "values") -> None:
    """Write a KPI surface as CSV: rows step-of-day, columns step ahead."""
    if what == "values":
        data = kpi.values
    elif what == "counts":
        data = kpi.counts
    else:
        raise ConfigError(f"unknown payload {what!r}")
    frame = pd.DataFrame(
        data,
        index=pd.RangeIndex(kpi.steps_per_day, name="step_of_day"),
        columns=[f"step_ahead_{j + 1}" for j in range(kpi.horizon)],
    )
    frame.to_csv(path)


def save_columns_csv(path, columns: dict) -> None:
    """Write aligned 1-D arrays as CSV plot data, one column each."""
    if not columns:
        raise ConfigError("need at least one column")
    arrays = {k: np.asarray(v).ravel() for k, v in columns.items()}
    lengths = {a.size for a in arrays.values()}
    if len(lengths) != 1:
        raise ConfigError("plot-data columns must have equal lengths")
    pd.DataFrame(arrays).to_csv(path, index=False)


def _json_ready(value):
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_ready(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def save_json_summary(path, payload: dict) -> None:
    """Write a summary dict as deterministic JSON (sorted keys, no NaN)."""
    with open(path, "w") as handle:
        json.dump(_json_ready(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")
