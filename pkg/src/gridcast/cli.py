"""Benchmark command line: staged subcommands plus `all`.

Exit codes distinguish failure classes so scripted runs can react:
2 for configuration errors, 3 for data problems, 4 for numeric
failures; unexpected exceptions propagate with a traceback.

The staged subcommands share one run directory. `forecast` populates
the cache, `reconcile` and `evaluate` consume it (recomputing cheaply
from cache on each invocation, since results are pickled per series
and method), and `report` rebuilds the figure CSVs from the JSON
summary alone. `all` chains every stage in order.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .bench.config import BenchmarkConfig, load_config, save_config
from .bench.runner import (
    run_benchmark,
    stage_data,
    stage_evaluate,
    stage_forecast,
    stage_reconcile,
    stage_report,
)
from .errors import ConfigError, DataError, NumericError
from .evaluation import save_json_summary
from .ingestion import ingest_meters, load_meter_csv
from .synthetic import generate_synthetic, write_synthetic_csv

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridcast-bench",
        description="Hierarchical load-forecasting benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="override the output directory")
        p.add_argument(
            "--workers", type=int, help="override the forecast worker count"
        )

    common(sub.add_parser("ingest", help="clean a meter CSV and report repairs"))
    common(sub.add_parser("synth", help="generate synthetic CSV data"))
    common(sub.add_parser("forecast", help="run cross-validated forecasters"))
    common(sub.add_parser("reconcile", help="reconcile the configured forecaster"))
    common(sub.add_parser("evaluate", help="score forecasts and write reports"))
    common(sub.add_parser("report", help="rebuild figure CSVs from the summary"))
    common(sub.add_parser("all", help="run every stage in order"))
    return parser


def _load(args) -> BenchmarkConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = BenchmarkConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _cmd_ingest(config: BenchmarkConfig) -> None:
    if config.data.source != "csv":
        raise ConfigError("ingest needs data.source = csv in the config")
    raw = load_meter_csv(config.data.meters_csv)
    frame, report = ingest_meters(
        raw,
        max_gap_steps=config.data.max_gap_steps,
        min_valid_days=config.data.min_valid_days,
        steps_per_day=config.data.steps_per_day,
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_json_summary(out / "cleaning_report.json", report.as_dict())
    print(
        f"kept {len(report.kept)} meters over {frame.n_days} days; "
        f"report at {out / 'cleaning_report.json'}"
    )


def _cmd_synth(config: BenchmarkConfig) -> None:
    spec = config.data.synthetic
    dataset = generate_synthetic(
        n_bottom=spec.n_bottom,
        days=spec.days,
        seed=config.seed,
        noise_scale=spec.noise_scale,
        steps_per_day=config.data.steps_per_day,
        levels=config.hierarchy_levels,
        start=spec.start,
    )
    out = Path(config.output_dir)
    paths = write_synthetic_csv(dataset, out / "data")
    print(f"wrote {paths['meters']} and {paths['nwp']}")


def _prepare(config: BenchmarkConfig):
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    return out, stage_data(config)


def _cmd_forecast(config: BenchmarkConfig) -> None:
    out, staged = _prepare(config)
    forecasts = stage_forecast(config, staged, cache_dir=out / "cache")
    n = sum(len(v) for v in forecasts.values())
    print(f"cross-validated {n} (series, method) pairs; cache at {out / 'cache'}")


def _cmd_reconcile(config: BenchmarkConfig) -> None:
    out, staged = _prepare(config)
    forecasts = stage_forecast(config, staged, cache_dir=out / "cache")
    _, diagnostics = stage_reconcile(config, staged, forecasts)
    for label, diag in diagnostics.items():
        print(f"{label}: max coherence gap {diag['max_coherence_gap']:.3e}")
    if not diagnostics:
        print("no reconciliation variants configured")


def _cmd_evaluate(config: BenchmarkConfig) -> None:
    out, staged = _prepare(config)
    forecasts = stage_forecast(config, staged, cache_dir=out / "cache")
    reconciled, diag = stage_reconcile(config, staged, forecasts)
    summary, _ = stage_evaluate(config, staged, forecasts, reconciled, diag, out)
    print(f"summary at {out / 'reports' / 'summary.json'}")
    winner = summary["rankings"]["winner"]
    print(f"ranking winner: {winner if winner else 'none (tie or split)'}")


def _cmd_report(config: BenchmarkConfig) -> None:
    written = stage_report(Path(config.output_dir))
    print(f"wrote {len(written)} figure files under {config.output_dir}/figures")


def _cmd_all(config: BenchmarkConfig) -> None:
    manifest = run_benchmark(config)
    stages = ", ".join(
        f"{s['name']} {s['seconds']:.1f}s" for s in manifest.stages
    )
    print(f"run complete ({stages}); manifest at {config.output_dir}/manifest.json")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    commands = {
        "ingest": _cmd_ingest,
        "synth": _cmd_synth,
        "forecast": _cmd_forecast,
        "reconcile": _cmd_reconcile,
        "evaluate": _cmd_evaluate,
        "report": _cmd_report,
        "all": _cmd_all,
    }
    try:
        config = _load(args)
        commands[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
