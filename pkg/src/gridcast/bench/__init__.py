"""Benchmark orchestration: config, staged runner, and comparisons."""

from .config import (
    BenchmarkConfig,
    DataConfig,
    ForecasterSpec,
    ReconciliationSpec,
    SyntheticSpec,
    load_config,
    save_config,
)
from .runner import (
    RunManifest,
    StagedData,
    compare_forecasters,
    compare_reconciliation,
    run_benchmark,
    stage_data,
    stage_evaluate,
    stage_forecast,
    stage_reconcile,
    stage_report,
)

__all__ = [
    "BenchmarkConfig",
    "DataConfig",
    "ForecasterSpec",
    "ReconciliationSpec",
    "RunManifest",
    "StagedData",
    "SyntheticSpec",
    "compare_forecasters",
    "compare_reconciliation",
    "load_config",
    "run_benchmark",
    "save_config",
    "stage_data",
    "stage_evaluate",
    "stage_forecast",
    "stage_reconcile",
    "stage_report",
]
