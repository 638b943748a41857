"""Run the staged benchmark end to end at a small scale.

One config drives everything: data staging, cross-validated forecasts
for every (series, family) pair, reconciliation variants, KPI scoring,
and figure-analog CSVs. The same run is available from the shell as
`gridcast-bench all --config <file>`.
"""

import json
import tempfile
from pathlib import Path

from gridcast.bench import BenchmarkConfig, run_benchmark


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        config = BenchmarkConfig.from_dict(
            {
                "data": {
                    "steps_per_day": 24,
                    "synthetic": {"n_bottom": 4, "days": 24},
                },
                "hierarchy_levels": [2],
                "order": 24,
                "horizon": 24,
                "folds": 2,
                "forecasters": [
                    {"method": "persistence"},
                    {"method": "knn", "options": {"n_neighbors": 10}},
                    {
                        "method": "boosted_trees",
                        "options": {"n_trees": 20, "max_leaves": 5, "min_leaf": 10},
                    },
                ],
                "reconcile_forecaster": "boosted_trees",
                "covariance_stride": 6,
                "seed": 1,
                "output_dir": str(Path(tmp) / "run"),
            }
        )
        manifest = run_benchmark(config)
        print("stages:", ", ".join(
            f"{s['name']} {s['seconds']:.1f}s" for s in manifest.stages
        ))

        out = Path(config.output_dir)
        summary = json.loads((out / "reports" / "summary.json").read_text())
        print(f"\nconfig hash {summary['config_hash'][:12]}..., "
              f"{len(summary['series']['all'])} series")

        print(f"\n{'method':28s} {'nRMSE top':>10s} {'nRMSE bottom':>13s}")
        for method, cell in sorted(summary["table"]["nrmse"].items()):
            print(f"{method:28s} {cell['aggregate']:10.3f} "
                  f"{cell['bottom_average']:13.3f}")
        winner = summary["rankings"]["winner"]
        print(f"\nranking winner across all cells: {winner or 'split'}")

        for label, entry in summary["figures"]["reconciliation"].items():
            print(f"{label}: mean top-series RMSE reduction "
                  f"{entry['mean']['top']:+.3f}")

        files = sorted(p.relative_to(out) for p in out.rglob("*.csv"))
        print(f"\n{len(files)} CSV artifacts; figure-analog files:")
        for p in files:
            if str(p).startswith("figures/"):
                print(f"  {p}")


if __name__ == "__main__":
    main()
