"""Staged benchmark driver: data, forecast, reconcile, evaluate, report.

Stages run in order and the run directory accumulates their outputs:

* ``data/dataset.json``: what was loaded or generated.
* ``cache/*.pkl``: per-(series, method) cross-validation results, keyed
  by a hash of everything that influences them, so re-runs and
  reconciliation experiments reuse base forecasts.
* ``reports/``: per-series KPI map CSVs, reconciliation maps, and the
  machine-readable ``summary.json``.
* ``figures/``: plot-data CSVs, regenerated from ``summary.json`` alone.
* ``manifest.json``: config hash, per-stage wall-clock and output
  digests. Wall-clock lives only here, so the summary stays
  byte-identical across reruns of the same config.

All randomness flows from the single config seed: the dataset uses it
directly and each (series, method, fold) gets a stream derived from it.
"""

import hashlib
import json
import pickle
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..embedding import EmbeddingSpec
from ..errors import ConfigError, DataError, NumericError
from ..evaluation import (
    KpiMatrix,
    bin_by_steps,
    grand_mean,
    horizon_profiles,
    mape_map,
    normalize_map,
    quantile_score,
    relative_reduction_profile,
    rmse_map,
    save_columns_csv,
    save_json_summary,
    save_kpi_map_csv,
)
from ..folds import FoldPlan, build_folds
from ..forecasters import FORECASTER_FAMILIES, CvResult, run_forecaster_cv
from ..forecasters.cv import FoldForecast
from ..forecasters.results import ForecastResult, QuantileGrid
from ..frames import TimeSeriesFrame, add_calendar_features
from ..hierarchy import Hierarchy, build_summation_matrix, default_series_names
from ..ingestion import align_nwp, ingest_meters, load_meter_csv, load_nwp_csv
from ..reconciliation import (
    estimate_graphical_lasso,
    estimate_ledoit_wolf,
    reconcile_quantiles,
    reconciliation_matrix,
    save_reconciliation_matrix,
)
from ..synthetic import generate_synthetic
from .config import BenchmarkConfig, ForecasterSpec, save_config

COHERENCE_TOL = 1e-9
WEATHER_COLUMNS = ("temp", "ghi")
CALENDAR_COLUMNS = ("step_of_day", "day_of_week", "holiday")


@dataclass
class RunManifest:
    """Provenance of one run: config identity plus per-stage records."""

    config_hash: str
    artifact_version: str = __version__
    stages: list = field(default_factory=list)
    failed_stage: str | None = None

    def record(self, name: str, seconds: float, outputs: dict) -> None:
        self.stages.append(
            {"name": name, "seconds": seconds, "outputs": outputs}
        )

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "artifact_version": self.artifact_version,
            "stages": self.stages,
            "failed_stage": self.failed_stage,
        }

    def save(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.as_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _digest_tree(root: Path, paths: list) -> dict:
    return {str(p.relative_to(root)): _digest(p) for p in sorted(paths)}


@dataclass(frozen=True)
class StagedData:
    """Everything later stages need about the dataset."""

    frame: TimeSeriesFrame
    hierarchy: Hierarchy
    plan: FoldPlan
    description: dict


def series_seed(seed: int, series: str) -> int:
    """Per-series integer seed derived from the run seed."""
    tag = zlib.crc32(series.encode("utf-8"))
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def make_forecaster(spec: ForecasterSpec, available: set):
    """Instantiate a family, adapting exogenous defaults to the frame.

    Defaults that reference weather columns are filtered down to what
    the frame actually carries (a CSV run without an NWP feed still
    works); options given explicitly are passed through verbatim and
    fail loudly if a column is missing.
    """
    cls = FORECASTER_FAMILIES[spec.method]
    options = dict(spec.options)
    if spec.method == "armax" and "exog_columns" not in options:
        options["exog_columns"] = tuple(
            c for c in (*WEATHER_COLUMNS, "holiday") if c in available
        )
    if spec.method == "holt_winters" and "detrend_columns" not in options:
        options["detrend_columns"] = tuple(
            c for c in ("ghi", "temp") if c in available
        )
    for key in ("exog_columns", "detrend_columns"):
        if key in options and options[key] is not None:
            options[key] = tuple(options[key])
    try:
        return cls(**options)
    except TypeError as exc:
        raise ConfigError(
            f"bad options for forecaster {spec.method!r}: {exc}"
        ) from exc


def stage_data(config: BenchmarkConfig) -> StagedData:
    """Load or generate the dataset and attach every derived column.

    The returned frame carries one column per hierarchy series (upper
    aggregations computed from the bottom ones), calendar features, and
    leakage-safe aligned weather columns when a forecast feed exists.
    """
    data = config.data
    if data.source == "synthetic":
        spec = data.synthetic
        dataset = generate_synthetic(
            n_bottom=spec.n_bottom,
            days=spec.days,
            seed=config.seed,
            noise_scale=spec.noise_scale,
            steps_per_day=data.steps_per_day,
            levels=config.hierarchy_levels,
            start=spec.start,
        )
        frame, nwp = dataset.frame, dataset.nwp
        bottom_names = list(frame.column_names)
        cleaning = None
    else:
        raw = load_meter_csv(data.meters_csv)
        frame, report = ingest_meters(
            raw,
            max_gap_steps=data.max_gap_steps,
            min_valid_days=data.min_valid_days,
            steps_per_day=data.steps_per_day,
        )
        bottom_names = list(frame.column_names)
        nwp = load_nwp_csv(data.nwp_csv) if data.nwp_csv else None
        cleaning = report.as_dict()

    n_bottom = len(bottom_names)
    s_matrix = build_summation_matrix(n_bottom, config.hierarchy_levels)
    upper_names = default_series_names(s_matrix)[: s_matrix.shape[0] - n_bottom]
    hierarchy = Hierarchy(s_matrix, tuple(upper_names) + tuple(bottom_names))

    bottom = frame.matrix(bottom_names)
    upper = bottom @ hierarchy.a_matrix.T
    frame = frame.with_columns(
        {name: upper[:, i] for i, name in enumerate(upper_names)}
    )
    frame = add_calendar_features(frame)
    if nwp is not None:
        aligned = align_nwp(
            nwp,
            frame,
            guard_steps=config.horizon,
            variables=[v for v in WEATHER_COLUMNS if v in nwp.variables],
        )
        frame = frame.with_columns(aligned)

    plan = build_folds(frame.n_days, config.folds)
    description = {
        "source": data.source,
        "n_days": frame.n_days,
        "steps_per_day": frame.steps_per_day,
        "series": list(hierarchy.names),
        "n_bottom": n_bottom,
        "weather_columns": [c for c in WEATHER_COLUMNS if c in frame],
        "folds": plan.k,
        "cleaning": cleaning,
    }
    return StagedData(frame, hierarchy, plan, description)


def _task_hash(config: BenchmarkConfig, series: str, spec: ForecasterSpec) -> str:
    """Cache key for one (series, method) CV result.

    Only fields that influence the result participate, so runs that
    differ in reconciliation choices or output location reuse the same
    base forecasts.
    """
    payload = {
        "data": asdict(config.data),
        "hierarchy_levels": list(config.hierarchy_levels),
        "order": config.order,
        "horizon": config.horizon,
        "folds": config.folds,
        "quantile_levels": list(config.quantile_levels),
        "covariance_stride": config.covariance_stride,
        "seed": config.seed,
        "series": series,
        "forecaster": asdict(spec),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _embedding_spec(config: BenchmarkConfig, staged: StagedData, series: str):
    return EmbeddingSpec(
        order=config.order,
        horizon=config.horizon,
        target=series,
        point=tuple(c for c in CALENDAR_COLUMNS if c in staged.frame),
        future=tuple(c for c in WEATHER_COLUMNS if c in staged.frame),
    )


def _run_one(
    config: BenchmarkConfig, staged: StagedData, series: str, spec: ForecasterSpec
) -> CvResult:
    available = set(staged.frame.column_names)
    return run_forecaster_cv(
        staged.frame,
        series,
        staged.plan,
        make_forecaster(spec, available),
        embed=_embedding_spec(config, staged, series),
        grid=QuantileGrid(np.asarray(config.quantile_levels)),
        seed=series_seed(config.seed, series),
        covariance_stride=config.covariance_stride,
    )


_WORKER_STATE: dict = {}


def _worker_init(config: BenchmarkConfig, staged: StagedData) -> None:
    _WORKER_STATE["config"] = config
    _WORKER_STATE["staged"] = staged


def _worker_run(series: str, spec: ForecasterSpec) -> CvResult:
    return _run_one(_WORKER_STATE["config"], _WORKER_STATE["staged"], series, spec)


def stage_forecast(
    config: BenchmarkConfig,
    staged: StagedData,
    cache_dir: Path | None = None,
) -> dict:
    """Cross-validate every (series, method) pair.

    Returns ``{series: {method: CvResult}}``. With a cache directory,
    results are pickled per task hash and reused when present.
    """
    names = list(staged.hierarchy.names)
    tasks = []
    results: dict = {s: {} for s in names}
    for series in names:
        for spec in config.forecasters:
            cache_path = None
            if cache_dir is not None:
                cache_path = cache_dir / f"{_task_hash(config, series, spec)}.pkl"
                if cache_path.exists():
                    with open(cache_path, "rb") as handle:
                        results[series][spec.method] = pickle.load(handle)
                    continue
            tasks.append((series, spec, cache_path))

    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=config.workers,
            initializer=_worker_init,
            initargs=(config, staged),
        ) as pool:
            futures = [pool.submit(_worker_run, s, spec) for s, spec, _ in tasks]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_run_one(config, staged, s, spec) for s, spec, _ in tasks]

    for (series, spec, cache_path), result in zip(tasks, outcomes):
        results[series][spec.method] = result
        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            with open(cache_path, "wb") as handle:
                pickle.dump(result, handle)
    return results


def _stacked_fold(
    forecasts: dict, names: list, method: str, fold: int
) -> tuple:
    """Test means, truths and aligned training residuals for one fold.

    Arrays come back as (n_rows, horizon, n_series) with the hierarchy's
    series order on the last axis; residual issue instants are checked
    to agree across series, which the shared fold plan guarantees.
    """
    per_series = [forecasts[s][method].folds[fold] for s in names]
    issues = per_series[0].train_residual_issues
    for s, f in zip(names, per_series):
        if not np.array_equal(f.train_residual_issues, issues):
            raise DataError(
                f"residual origins of series {s!r} are misaligned in fold {fold}"
            )
    mean = np.stack([f.test.mean for f in per_series], axis=-1)
    truth = np.stack([f.test_truth for f in per_series], axis=-1)
    residuals = np.stack([f.train_residuals for f in per_series], axis=-1)
    return mean, truth, residuals, issues, per_series[0].test.issue_index


def _estimate_covariance(variant, samples: np.ndarray):
    if samples.shape[0] < 2:
        raise DataError("need at least two residual rows for a covariance")
    if variant.covariance == "ledoit_wolf":
        return estimate_ledoit_wolf(samples)
    return estimate_graphical_lasso(samples, penalty=variant.penalty)


def _reconcile_arrays(
    variant,
    hierarchy: Hierarchy,
    mean: np.ndarray,
    residuals: np.ndarray,
    pooled_residuals: np.ndarray | None,
    covariance_horizon: str,
) -> tuple:
    """Apply one reconciliation variant to stacked fold arrays.

    Returns reconciled means, reconciled residuals and the covariance
    diagnostics. ``pooled_residuals`` (if given) feeds the estimator
    instead of the fold's own residuals.
    """
    est_src = pooled_residuals if pooled_residuals is not None else residuals
    diagnostics = []

    def matrix_for(step_slice) -> np.ndarray:
        if variant.method == "ols":
            return reconciliation_matrix(hierarchy, "ols")
        cov = _estimate_covariance(variant, est_src[:, step_slice, :].reshape(-1, est_src.shape[-1]))
        diagnostics.append(
            {"regularization": cov.regularization, "jitter": cov.jitter}
        )
        return reconciliation_matrix(hierarchy, variant.method, cov)

    if covariance_horizon == "first_step" or variant.method == "ols":
        m = matrix_for(slice(0, 1))
        rec_mean = np.einsum("ij,rhj->rhi", m, mean)
        rec_res = np.einsum("ij,rhj->rhi", m, residuals)
    else:
        rec_mean = np.empty_like(mean)
        rec_res = np.empty_like(residuals)
        for j in range(mean.shape[1]):
            m = matrix_for(slice(j, j + 1))
            rec_mean[:, j, :] = mean[:, j, :] @ m.T
            rec_res[:, j, :] = residuals[:, j, :] @ m.T
    return rec_mean, rec_res, diagnostics


def stage_reconcile(
    config: BenchmarkConfig, staged: StagedData, forecasts: dict
) -> tuple:
    """Reconcile the configured forecaster under every variant.

    Returns ``({label: {series: CvResult}}, {label: diagnostics})``.
    Reconciled quantile fans are rebuilt per series from banks of
    reconciled training errors. A coherence gap beyond tolerance on any
    fold raises :class:`NumericError`.
    """
    if not config.reconciliations:
        return {}, {}
    hierarchy = staged.hierarchy
    names = list(hierarchy.names)
    method = config.reconcile_forecaster
    spd = staged.frame.steps_per_day
    grid = QuantileGrid(np.asarray(config.quantile_levels))
    n_folds = staged.plan.k

    pooled = None
    if config.covariance_scope == "pooled":
        pooled = np.concatenate(
            [_stacked_fold(forecasts, names, method, f)[2] for f in range(n_folds)],
            axis=0,
        )

    reconciled: dict = {}
    diagnostics: dict = {}
    for variant in config.reconciliations:
        label = f"{method}+{variant.label}"
        per_series_folds: dict = {s: [] for s in names}
        worst_gap = 0.0
        cov_diag: list = []
        for fold in range(n_folds):
            mean, truth, residuals, res_issues, test_issues = _stacked_fold(
                forecasts, names, method, fold
            )
            rec_mean, rec_res, diag = _reconcile_arrays(
                variant, hierarchy, mean, residuals, pooled,
                config.covariance_horizon,
            )
            cov_diag.extend(diag)
            worst_gap = max(worst_gap, hierarchy.coherence_gap(rec_mean))
            res_sod = (res_issues % spd).astype(np.int64)
            for i, series in enumerate(names):
                result = reconcile_quantiles(
                    rec_mean[:, :, i],
                    test_issues,
                    rec_res[:, :, i],
                    res_sod,
                    spd,
                    grid,
                )
                per_series_folds[series].append(
                    FoldForecast(
                        fold=fold,
                        test=result,
                        test_truth=truth[:, :, i],
                        train_residuals=rec_res[:, :, i],
                        train_residual_issues=res_issues,
                        bank=None,
                    )
                )
        if worst_gap > COHERENCE_TOL:
            raise NumericError(
                f"reconciliation {label} left a coherence gap of {worst_gap:.3e}"
            )
        reconciled[label] = {
            s: CvResult(
                series=s,
                method=label,
                horizon=config.horizon,
                steps_per_day=spd,
                folds=tuple(per_series_folds[s]),
            )
            for s in names
        }
        diagnostics[label] = {
            "max_coherence_gap": worst_gap,
            "covariances_estimated": len(cov_diag),
            "mean_regularization": (
                float(np.mean([d["regularization"] for d in cov_diag]))
                if cov_diag
                else None
            ),
        }
    return reconciled, diagnostics


def _series_maps(result: CvResult, floor: float) -> dict:
    errors = result.test_mean() - result.test_truth()
    truth = result.test_truth()
    sod = (result.test_issues() % result.steps_per_day).astype(np.int64)
    folds = result.fold_of_rows()
    return {
        "rmse": rmse_map(errors, sod, folds, result.steps_per_day),
        "mape": mape_map(errors, truth, sod, folds, result.steps_per_day, floor),
        "qs": quantile_score(
            result.test_quantiles(), truth, result.folds[0].test.grid
        ),
    }


def _sparse_map(kpi: KpiMatrix) -> dict:
    """Populated cells of a KPI surface, small enough for the summary."""
    rows, cols = np.where(~np.isnan(kpi.values))
    return {
        "shape": [int(kpi.values.shape[0]), int(kpi.values.shape[1])],
        "step_of_day": rows.astype(int).tolist(),
        "step_ahead": (cols + 1).astype(int).tolist(),
        "value": kpi.values[rows, cols].tolist(),
        "count": kpi.counts[rows, cols].astype(int).tolist(),
    }


def compare_forecasters(table: dict) -> dict:
    """Rank methods per (metric, scope) cell; lower scores are better.

    ``table`` is ``{metric: {method: {scope: value}}}``. The winner is
    the method ranked first in every cell; ``tie`` flags any cell whose
    best value is shared.
    """
    metrics = sorted(table)
    if not metrics:
        raise ConfigError("ranking needs at least one metric")
    methods = sorted(next(iter(table.values())))
    if len(methods) < 2:
        raise ConfigError("ranking needs at least two forecasters")
    cells: dict = {}
    leaders: list = []
    tie = False
    for metric in metrics:
        for scope in ("aggregate", "bottom_average"):
            scores = {m: table[metric][m][scope] for m in methods}
            ranked = sorted(methods, key=lambda m: (scores[m], m))
            cells[f"{metric}/{scope}"] = ranked
            best = scores[ranked[0]]
            cell_leaders = {m for m in methods if scores[m] == best}
            if len(cell_leaders) > 1:
                tie = True
            leaders.append(cell_leaders)
    common = set.intersection(*leaders)
    winner = sorted(common)[0] if len(common) == 1 else None
    return {"cells": cells, "winner": winner, "tie": tie}


def compare_reconciliation(
    base_maps: dict, reconciled_maps: dict, bin_steps: int,
    top_series: str, bottom_series: list,
) -> dict:
    """Per-series binned relative reductions plus scope summaries.

    ``base_maps`` and ``reconciled_maps`` hold one raw KpiMatrix per
    series. Reduction is ``1 - reconciled/base`` of the horizon profile,
    averaged into bins of ``bin_steps`` steps ahead; positive values
    mean reconciliation helped. Identical maps give exactly zero.
    """
    if set(base_maps) != set(reconciled_maps):
        raise ConfigError("base and reconciled maps cover different series")
    if top_series not in base_maps:
        raise ConfigError(f"missing top series {top_series!r}")
    per_series = {
        s: bin_by_steps(
            relative_reduction_profile(base_maps[s], reconciled_maps[s]), bin_steps
        )
        for s in base_maps
    }
    stack_all = np.vstack([per_series[s] for s in sorted(per_series)])
    stack_bottom = np.vstack([per_series[s] for s in bottom_series])
    with np.errstate(invalid="ignore"):
        curves = {
            "top": per_series[top_series],
            "hierarchy_average": np.nanmean(stack_all, axis=0),
            "bottom_average": np.nanmean(stack_bottom, axis=0),
        }
    return {
        "bin_steps": bin_steps,
        "per_series": per_series,
        "curves": curves,
        "mean": {k: float(np.nanmean(v)) for k, v in curves.items()},
    }


def _scope_average(values_by_series: dict, series: list) -> np.ndarray:
    return np.nanmean(np.vstack([values_by_series[s] for s in series]), axis=0)


def stage_evaluate(
    config: BenchmarkConfig,
    staged: StagedData,
    forecasts: dict,
    reconciled: dict,
    rec_diagnostics: dict,
    out_dir: Path,
) -> tuple:
    """Score everything and assemble the summary document.

    Writes per-series KPI map CSVs under ``reports/maps`` and returns
    ``(summary, written paths)``. The summary holds every number the
    figure stage needs, and nothing run-dependent like wall-clock.
    """
    hierarchy = staged.hierarchy
    names = list(hierarchy.names)
    top = names[0]
    bottom = names[hierarchy.n_upper :]
    base_methods = [f.method for f in config.forecasters]
    floor = config.mape_floor

    all_results: dict = {m: forecasts_by(forecasts, m, names) for m in base_methods}
    for label, per_series in reconciled.items():
        all_results[label] = per_series

    maps: dict = {}
    for method, per_series in all_results.items():
        maps[method] = {s: _series_maps(per_series[s], floor) for s in names}

    norm: dict = {}
    for method in all_results:
        norm[method] = {}
        for s in names:
            base = maps["persistence"][s]
            mine = maps[method][s]
            norm[method][s] = {
                "nrmse": normalize_map(mine["rmse"], base["rmse"]),
                "nmape": normalize_map(mine["mape"], base["mape"]),
                "nqs": mine["qs"].normalized_by(base["qs"]),
            }

    table: dict = {}
    for metric in ("rmse", "mape"):
        table[metric] = {
            m: {
                "aggregate": grand_mean(maps[m][top][metric]),
                "bottom_average": float(
                    np.mean([grand_mean(maps[m][s][metric]) for s in bottom])
                ),
            }
            for m in all_results
        }
    for metric in ("nrmse", "nmape"):
        table[metric] = {
            m: {
                "aggregate": grand_mean(norm[m][top][metric]),
                "bottom_average": float(
                    np.mean([grand_mean(norm[m][s][metric]) for s in bottom])
                ),
            }
            for m in all_results
        }
    table["qs"] = {
        m: {
            "aggregate": maps[m][top]["qs"].qs,
            "bottom_average": float(
                np.mean([maps[m][s]["qs"].qs for s in bottom])
            ),
        }
        for m in all_results
    }
    table["nqs"] = {
        m: {
            "aggregate": norm[m][top]["nqs"].qs,
            "bottom_average": float(
                np.mean([norm[m][s]["nqs"].qs for s in bottom])
            ),
        }
        for m in all_results
    }

    ranking_table = {
        metric: {m: table[metric][m] for m in base_methods}
        for metric in ("nrmse", "nmape")
    }
    rankings = compare_forecasters(ranking_table)

    figures: dict = {
        "nkpi_maps": {
            metric: {m: _sparse_map(norm[m][top][metric]) for m in all_results}
            for metric in ("nrmse", "nmape")
        },
        "profiles": {},
        "quantile_scores": {},
        "reconciliation": {},
    }
    for metric in ("nrmse", "nmape"):
        figures["profiles"][metric] = {}
        for m in all_results:
            by_series = {s: horizon_profiles(norm[m][s][metric]) for s in names}
            figures["profiles"][metric][m] = {
                "aggregate": by_series[top].tolist(),
                "bottom_average": _scope_average(by_series, bottom).tolist(),
            }
    for m in all_results:
        top_qs = maps[m][top]["qs"]
        figures["quantile_scores"][m] = {
            "levels": top_qs.levels.tolist(),
            "mean_loss": {
                "aggregate": top_qs.mean_loss.tolist(),
                "bottom_average": np.mean(
                    [maps[m][s]["qs"].mean_loss for s in bottom], axis=0
                ).tolist(),
            },
            "qs_per_step": {
                "aggregate": top_qs.qs_per_step.tolist(),
                "bottom_average": np.mean(
                    [maps[m][s]["qs"].qs_per_step for s in bottom], axis=0
                ).tolist(),
            },
        }

    bin_steps = max(1, staged.frame.steps_per_day // 6)
    rec_method = config.reconcile_forecaster
    for label in reconciled:
        comparison = compare_reconciliation(
            {s: maps[rec_method][s]["rmse"] for s in names},
            {s: maps[label][s]["rmse"] for s in names},
            bin_steps,
            top,
            bottom,
        )
        figures["reconciliation"][label] = {
            "bin_steps": comparison["bin_steps"],
            "curves": {k: v.tolist() for k, v in comparison["curves"].items()},
            "mean": comparison["mean"],
        }

    config_echo = config.to_dict()
    config_echo.pop("output_dir")
    config_echo.pop("workers")
    summary = {
        "artifact_version": __version__,
        "config": config_echo,
        "config_hash": config.result_hash(),
        "dataset": staged.description,
        "series": {"top": top, "bottom": bottom, "all": names},
        "table": table,
        "rankings": rankings,
        "figures": figures,
        "reconciliation_diagnostics": rec_diagnostics,
    }

    written = []
    maps_dir = out_dir / "reports" / "maps"
    for method, per_series in maps.items():
        for s in names:
            for metric in ("rmse", "mape"):
                path = maps_dir / method / metric / f"{s}.csv"
                path.parent.mkdir(parents=True, exist_ok=True)
                save_kpi_map_csv(path, per_series[s][metric])
                written.append(path)
    summary_path = out_dir / "reports" / "summary.json"
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    save_json_summary(summary_path, summary)
    written.append(summary_path)
    return summary, written


def forecasts_by(forecasts: dict, method: str, names: list) -> dict:
    return {s: forecasts[s][method] for s in names}


def stage_report(out_dir: Path) -> list:
    """Regenerate figure-analog CSVs from the JSON summary alone."""
    summary_path = Path(out_dir) / "reports" / "summary.json"
    if not summary_path.exists():
        raise DataError(f"no summary at {summary_path}; run evaluate first")
    with open(summary_path) as handle:
        summary = json.load(handle)
    figures = summary["figures"]
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def tidy(path: Path, columns: dict) -> None:
        save_columns_csv(path, columns)
        written.append(path)

    for fig, metric in (("fig04_nmape_map", "nmape"), ("fig05_nrmse_map", "nrmse")):
        cols: dict = {"method": [], "step_of_day": [], "step_ahead": [], "value": []}
        for method in sorted(figures["nkpi_maps"][metric]):
            sparse = figures["nkpi_maps"][metric][method]
            n = len(sparse["value"])
            cols["method"].extend([method] * n)
            cols["step_of_day"].extend(sparse["step_of_day"])
            cols["step_ahead"].extend(sparse["step_ahead"])
            cols["value"].extend(sparse["value"])
        tidy(fig_dir / f"{fig}.csv", cols)

    cols = {"metric": [], "method": [], "scope": [], "step_ahead": [], "value": []}
    for metric in sorted(figures["profiles"]):
        for method in sorted(figures["profiles"][metric]):
            for scope, values in sorted(figures["profiles"][metric][method].items()):
                cols["metric"].extend([metric] * len(values))
                cols["method"].extend([method] * len(values))
                cols["scope"].extend([scope] * len(values))
                cols["step_ahead"].extend(range(1, len(values) + 1))
                cols["value"].extend(values)
    tidy(fig_dir / "fig06_profiles.csv", cols)

    cols = {"method": [], "scope": [], "kind": [], "x": [], "value": []}
    for method in sorted(figures["quantile_scores"]):
        entry = figures["quantile_scores"][method]
        for scope in ("aggregate", "bottom_average"):
            levels = entry["levels"]
            losses = entry["mean_loss"][scope]
            cols["method"].extend([method] * len(levels))
            cols["scope"].extend([scope] * len(levels))
            cols["kind"].extend(["per_level"] * len(levels))
            cols["x"].extend(levels)
            cols["value"].extend(losses)
            steps = entry["qs_per_step"][scope]
            cols["method"].extend([method] * len(steps))
            cols["scope"].extend([scope] * len(steps))
            cols["kind"].extend(["per_step"] * len(steps))
            cols["x"].extend(range(1, len(steps) + 1))
            cols["value"].extend(steps)
    tidy(fig_dir / "fig07_quantile_scores.csv", cols)

    scope_to_fig = (
        ("top", "fig08_reduction_top"),
        ("hierarchy_average", "fig09_reduction_hierarchy"),
        ("bottom_average", "fig10_reduction_bottom"),
    )
    for scope, fig in scope_to_fig:
        cols = {"variant": [], "bin_index": [], "bin_start_step": [], "value": []}
        for label in sorted(figures["reconciliation"]):
            entry = figures["reconciliation"][label]
            values = entry["curves"][scope]
            bin_steps = entry["bin_steps"]
            n = len(values)
            cols["variant"].extend([label] * n)
            cols["bin_index"].extend(range(n))
            cols["bin_start_step"].extend(i * bin_steps + 1 for i in range(n))
            cols["value"].extend(values)
        tidy(fig_dir / f"{fig}.csv", cols)
    return written


def run_benchmark(config: BenchmarkConfig) -> RunManifest:
    """Execute every stage in order, recording a manifest as it goes.

    A stage failure writes the partial manifest (with the failing stage
    named) before the error propagates.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config_hash=config.result_hash())
    manifest_path = out_dir / "manifest.json"

    state: dict = {}

    def data_stage() -> dict:
        state["staged"] = stage_data(config)
        path = out_dir / "data" / "dataset.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_json_summary(path, state["staged"].description)
        save_config(config, out_dir / "config.json")
        return _digest_tree(out_dir, [path, out_dir / "config.json"])

    def forecast_stage() -> dict:
        state["forecasts"] = stage_forecast(
            config, state["staged"], cache_dir=out_dir / "cache"
        )
        return {}

    def reconcile_stage() -> dict:
        state["reconciled"], state["rec_diag"] = stage_reconcile(
            config, state["staged"], state["forecasts"]
        )
        paths = []
        rec_dir = out_dir / "reports" / "reconciliation"
        for variant in config.reconciliations:
            if variant.method != "ols":
                continue
            rec_dir.mkdir(parents=True, exist_ok=True)
            matrix = reconciliation_matrix(state["staged"].hierarchy, "ols")
            path = rec_dir / "ols_map.csv"
            save_reconciliation_matrix(path, matrix, state["staged"].hierarchy)
            paths.append(path)
        return _digest_tree(out_dir, paths)

    def evaluate_stage() -> dict:
        state["summary"], written = stage_evaluate(
            config,
            state["staged"],
            state["forecasts"],
            state["reconciled"],
            state["rec_diag"],
            out_dir,
        )
        return _digest_tree(out_dir, written)

    def report_stage() -> dict:
        return _digest_tree(out_dir, stage_report(out_dir))

    stages = (
        ("data", data_stage),
        ("forecast", forecast_stage),
        ("reconcile", reconcile_stage),
        ("evaluate", evaluate_stage),
        ("report", report_stage),
    )
    for name, run in stages:
        t0 = time.perf_counter()
        try:
            outputs = run()
        except Exception:
            manifest.failed_stage = name
            manifest.save(manifest_path)
            raise
        manifest.record(name, time.perf_counter() - t0, outputs)
    manifest.save(manifest_path)
    return manifest
