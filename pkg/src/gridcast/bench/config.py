"""Benchmark configuration: a single JSON document with strict keys.

The default configuration mirrors the reference experiment: 10-minute
resolution (144 steps per day), day-ahead horizon of 144 steps with a
one-day lag window, 10 blocked cross-validation folds, eleven evenly
spaced quantile levels on [0.05, 0.95], the five forecaster families,
and reconciliation of the boosted-trees forecasts by OLS, minT and the
Gaussian conditioning method over shrunk or sparse covariances.

Unknown keys anywhere in the document are rejected, so typos fail fast
instead of silently running with defaults.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigError

FORECASTER_METHODS = (
    "persistence",
    "armax",
    "holt_winters",
    "knn",
    "boosted_trees",
)
RECONCILIATION_METHODS = ("ols", "mint", "bayes")
COVARIANCE_METHODS = ("ledoit_wolf", "graphical_lasso")


def _check_keys(raw: dict, cls, where: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys in {where}: {unknown}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Built-in generator settings (used when data.source = synthetic)."""

    n_bottom: int = 24
    days: int = 90
    noise_scale: float = 1.0
    start: str = "2018-01-01"

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticSpec":
        _check_keys(raw, cls, "data.synthetic")
        return cls(**raw)


@dataclass(frozen=True)
class DataConfig:
    """Where the loads come from: generator or CSV pair on disk."""

    source: str = "synthetic"
    steps_per_day: int = 144
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    meters_csv: str | None = None
    nwp_csv: str | None = None
    max_gap_steps: int = 6
    min_valid_days: int = 365

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError("data.source must be 'synthetic' or 'csv'")
        if self.source == "csv" and not self.meters_csv:
            raise ConfigError("data.source = csv requires data.meters_csv")
        if self.steps_per_day < 1 or 86_400 % self.steps_per_day != 0:
            raise ConfigError("data.steps_per_day must divide a day")
        if self.max_gap_steps < 0 or self.min_valid_days < 1:
            raise ConfigError("bad meter cleaning thresholds")

    @classmethod
    def from_dict(cls, raw: dict) -> "DataConfig":
        _check_keys(raw, cls, "data")
        raw = dict(raw)
        if "synthetic" in raw:
            raw["synthetic"] = SyntheticSpec.from_dict(raw["synthetic"])
        return cls(**raw)


@dataclass(frozen=True)
class ForecasterSpec:
    """One forecaster family plus constructor options."""

    method: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in FORECASTER_METHODS:
            raise ConfigError(
                f"unknown forecaster {self.method!r}; "
                f"known: {list(FORECASTER_METHODS)}"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "ForecasterSpec":
        _check_keys(raw, cls, "forecasters[]")
        return cls(**raw)


@dataclass(frozen=True)
class ReconciliationSpec:
    """One reconciliation variant: method plus covariance estimator."""

    method: str
    covariance: str | None = None
    penalty: float | None = None

    def __post_init__(self):
        if self.method not in RECONCILIATION_METHODS:
            raise ConfigError(
                f"unknown reconciliation {self.method!r}; "
                f"known: {list(RECONCILIATION_METHODS)}"
            )
        if self.method in ("mint", "bayes"):
            if self.covariance not in COVARIANCE_METHODS:
                raise ConfigError(
                    f"{self.method} needs covariance in {list(COVARIANCE_METHODS)}"
                )
        elif self.covariance is not None:
            raise ConfigError("ols reconciliation takes no covariance")
        if self.penalty is not None and self.penalty < 0:
            raise ConfigError("covariance penalty must be nonnegative")

    @property
    def label(self) -> str:
        if self.covariance is None:
            return self.method
        short = {"ledoit_wolf": "lw", "graphical_lasso": "glasso"}[self.covariance]
        return f"{self.method}_{short}"

    @classmethod
    def from_dict(cls, raw: dict) -> "ReconciliationSpec":
        _check_keys(raw, cls, "reconciliations[]")
        return cls(**raw)


# Benchmark-default tree budget.  Deliberately smaller than the library
# defaults: empirical fan charts are cut from training-window errors, so the
# trees must not fit the training window much better than unseen days, or the
# fans come out too narrow.  This budget keeps held-out tail coverage within
# a few percent of nominal on the synthetic reference while running a full
# hierarchy in minutes.
BOOSTED_TREES_BENCH_OPTIONS: dict = {
    "n_trees": 30,
    "max_leaves": 6,
    "learning_rate": 0.1,
    "min_leaf": 60,
    "subsample": 0.5,
    "colsample": 0.3,
    "fit_row_stride": 2,
    "max_bins": 64,
}


def _default_forecasters() -> tuple:
    options = {"boosted_trees": BOOSTED_TREES_BENCH_OPTIONS}
    return tuple(
        ForecasterSpec(m, options=dict(options.get(m, {})))
        for m in FORECASTER_METHODS
    )


def _default_reconciliations() -> tuple:
    return (
        ReconciliationSpec("ols"),
        ReconciliationSpec("mint", "ledoit_wolf"),
        ReconciliationSpec("mint", "graphical_lasso"),
        ReconciliationSpec("bayes", "ledoit_wolf"),
        ReconciliationSpec("bayes", "graphical_lasso"),
    )


def _default_levels() -> tuple:
    return tuple(float(v) for v in np.linspace(0.05, 0.95, 11))


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything a benchmark run needs, validated up front."""

    data: DataConfig = field(default_factory=DataConfig)
    hierarchy_levels: tuple = (2, 4)
    order: int = 144
    horizon: int = 144
    folds: int = 10
    quantile_levels: tuple = field(default_factory=_default_levels)
    forecasters: tuple = field(default_factory=_default_forecasters)
    reconciliations: tuple = field(default_factory=_default_reconciliations)
    reconcile_forecaster: str = "boosted_trees"
    covariance_scope: str = "per_fold"
    covariance_horizon: str = "first_step"
    covariance_stride: int = 6
    mape_floor: float = 0.1
    seed: int = 0
    workers: int = 1
    output_dir: str = "runs/benchmark"

    def __post_init__(self):
        object.__setattr__(self, "hierarchy_levels", tuple(self.hierarchy_levels))
        object.__setattr__(
            self, "quantile_levels", tuple(float(v) for v in self.quantile_levels)
        )
        object.__setattr__(self, "forecasters", tuple(self.forecasters))
        object.__setattr__(self, "reconciliations", tuple(self.reconciliations))
        if self.order < 1 or self.horizon < 1:
            raise ConfigError("order and horizon must be positive")
        if self.horizon > self.data.steps_per_day:
            raise ConfigError("horizon beyond one day is not supported")
        if self.order > self.data.steps_per_day:
            raise ConfigError("order beyond one day is not supported")
        if self.folds < 1:
            raise ConfigError("need at least one fold")
        if not self.forecasters:
            raise ConfigError("need at least one forecaster")
        names = [f.method for f in self.forecasters]
        if len(set(names)) != len(names):
            raise ConfigError("forecaster methods must be unique")
        if "persistence" not in names:
            raise ConfigError(
                "the persistence baseline is required (KPIs are normalized by it)"
            )
        if self.reconciliations and self.reconcile_forecaster not in names:
            raise ConfigError(
                f"reconcile_forecaster {self.reconcile_forecaster!r} "
                "is not in the forecaster list"
            )
        labels = [r.label for r in self.reconciliations]
        if len(set(labels)) != len(labels):
            raise ConfigError("reconciliation variants must be unique")
        if self.covariance_scope not in ("per_fold", "pooled"):
            raise ConfigError("covariance_scope must be per_fold or pooled")
        if self.covariance_horizon not in ("first_step", "per_horizon"):
            raise ConfigError(
                "covariance_horizon must be first_step or per_horizon"
            )
        if self.covariance_stride < 1:
            raise ConfigError("covariance_stride must be positive")
        if self.mape_floor <= 0:
            raise ConfigError("mape_floor must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "BenchmarkConfig":
        _check_keys(raw, cls, "config")
        raw = dict(raw)
        if "data" in raw:
            raw["data"] = DataConfig.from_dict(raw["data"])
        if "forecasters" in raw:
            raw["forecasters"] = tuple(
                ForecasterSpec.from_dict(f) for f in raw["forecasters"]
            )
        if "reconciliations" in raw:
            raw["reconciliations"] = tuple(
                ReconciliationSpec.from_dict(r) for r in raw["reconciliations"]
            )
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def result_hash(self) -> str:
        """Hash of every field that influences computed numbers.

        Output location and worker count are excluded: they change
        where results go and how fast they arrive, never their values.
        """
        payload = self.to_dict()
        payload.pop("output_dir")
        payload.pop("workers")
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path) -> BenchmarkConfig:
    """Read and validate a JSON config file."""
    try:
        handle = open(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    with handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return BenchmarkConfig.from_dict(raw)


def save_config(config: BenchmarkConfig, path) -> None:
    with open(path, "w") as handle:
        json.dump(config.to_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")
