"""Cross-validate forecaster families on one series.

Shows the library layer the benchmark is built from: lag-window
embedding, blocked folds with embed/test/gap days, and the CV driver
that returns per-fold point forecasts, quantile fans and training
residuals for every family.
"""

import numpy as np

from gridcast import EmbeddingSpec, add_calendar_features, build_folds
from gridcast.evaluation import grand_mean, rmse_map
from gridcast.forecasters import FORECASTER_FAMILIES
from gridcast.forecasters.cv import run_forecaster_cv
from gridcast.forecasters.results import QuantileGrid
from gridcast.ingestion import align_nwp
from gridcast.synthetic import generate_synthetic


def main() -> None:
    spd = 48
    dataset = generate_synthetic(
        n_bottom=4, days=30, seed=11, steps_per_day=spd, levels=(2,)
    )
    frame = dataset.frame
    total = frame.matrix(frame.column_names).sum(axis=1)
    frame = frame.with_columns({"total": total})
    frame = add_calendar_features(frame)
    frame = frame.with_columns(
        align_nwp(dataset.nwp, frame, guard_steps=spd, variables=["temp", "ghi"])
    )

    plan = build_folds(frame.n_days, k=3)
    print(f"{plan.k} folds; fold 0 has {len(plan.folds[0])} ten-day sequences "
          f"(7 train days, embed day, test day, gap day each)")

    embed = EmbeddingSpec(
        order=spd, horizon=spd, target="total",
        point=("step_of_day", "day_of_week", "holiday"),
        future=("temp", "ghi"),
    )
    grid = QuantileGrid(np.linspace(0.05, 0.95, 11))

    forecasters = {
        "persistence": FORECASTER_FAMILIES["persistence"](),
        "holt_winters": FORECASTER_FAMILIES["holt_winters"](),
        "knn": FORECASTER_FAMILIES["knn"](n_neighbors=15),
    }
    results = {}
    for name, forecaster in forecasters.items():
        results[name] = run_forecaster_cv(
            frame, "total", plan, forecaster, embed=embed, grid=grid, seed=11
        )

    print("\nday-ahead RMSE (all folds pooled into a per-cell map):")
    for name, res in results.items():
        errors = res.test_mean() - res.test_truth()
        sod = (res.test_issues() % spd).astype(np.int64)
        kpi = rmse_map(errors, sod, res.fold_of_rows(), spd)
        print(f"  {name:13s} grand mean {grand_mean(kpi):7.2f}")

    res = results["holt_winters"]
    fans = res.test_quantiles()
    truth = res.test_truth()
    step = spd // 2
    print(f"\nsmoother fan at step-ahead {step + 1}, first test day:")
    print(f"  q05 {fans[0, 0, step]:7.1f} | q50 {fans[5, 0, step]:7.1f} "
          f"| q95 {fans[-1, 0, step]:7.1f} | actual {truth[0, step]:7.1f}")
    inside = float(((truth >= fans[0]) & (truth <= fans[-1])).mean())
    print(f"  share of test instants inside the 5%-95% band: {inside:.2f}")


if __name__ == "__main__":
    main()
