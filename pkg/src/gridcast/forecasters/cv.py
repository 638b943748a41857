"""Cross-validated forecasting of one series with one method.

The driver walks the blocked fold plan: per fold it embeds nothing new
(the embedding is shared), fits the forecaster on the training rows,
banks training errors into quantile fans unless the family provides
its own, and forecasts the fold's test samples. Training residuals are
retained on a strided subset of origins, aligned across methods and
series, which is what the cross-series covariance estimation step
consumes later.
"""

import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..embedding import EmbeddingSpec, hankel_embed
from ..errors import ConfigError, DataError
from ..folds import FoldPlan
from ..frames import TimeSeriesFrame
from .base import FoldContext, Forecaster
from .error_bank import ErrorBank, build_error_bank
from .results import ForecastResult, QuantileGrid


@dataclass(frozen=True)
class FoldForecast:
    """One fold's outcome: test forecasts plus banked training errors."""

    fold: int
    test: ForecastResult
    test_truth: np.ndarray
    train_residuals: np.ndarray
    train_residual_issues: np.ndarray
    bank: ErrorBank | None
    timing: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CvResult:
    series: str
    method: str
    horizon: int
    steps_per_day: int
    folds: tuple[FoldForecast, ...]

    def test_mean(self) -> np.ndarray:
        return np.vstack([f.test.mean for f in self.folds])

    def test_quantiles(self) -> np.ndarray:
        return np.concatenate([f.test.quantiles for f in self.folds], axis=1)

    def test_truth(self) -> np.ndarray:
        return np.vstack([f.test_truth for f in self.folds])

    def test_issues(self) -> np.ndarray:
        return np.concatenate([f.test.issue_index for f in self.folds])

    def fold_of_rows(self) -> np.ndarray:
        return np.concatenate(
            [np.full(f.test.n_rows, f.fold) for f in self.folds]
        )


def method_rng(seed: int, fold: int, method: str) -> np.random.Generator:
    """Independent, reproducible stream per (seed, fold, method)."""
    tag = zlib.crc32(method.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, fold, tag]))


def run_forecaster_cv(
    frame: TimeSeriesFrame,
    target: str,
    plan: FoldPlan,
    forecaster: Forecaster,
    embed: EmbeddingSpec | None = None,
    grid: QuantileGrid | None = None,
    seed: int = 0,
    covariance_stride: int = 1,
) -> CvResult:
    """Run the full blocked cross-validation for one (series, method).

    ``covariance_stride`` thins the retained training residuals (and,
    for families without banked errors, the training predictions that
    produce them); the spared origins stay identical across series and
    methods so cross-series covariances line up.
    """
    if target not in frame:
        raise DataError(f"frame has no column {target!r}")
    if int(frame.step_of_day()[0]) != 0:
        raise DataError("cross-validation requires a frame starting at midnight")
    if covariance_stride < 1:
        raise ConfigError("covariance_stride must be positive")
    grid = grid or QuantileGrid()
    embed = embed or EmbeddingSpec(
        order=frame.steps_per_day, horizon=frame.steps_per_day, target=target
    )
    if embed.target != target:
        raise ConfigError("embedding target does not match the requested series")
    if plan.n_days * frame.steps_per_day != frame.n_steps:
        raise ConfigError("fold plan does not cover the frame span")
    pair = hankel_embed(frame, embed)
    spd = frame.steps_per_day

    folds = []
    for fold in range(plan.k):
        train_rows = plan.train_rows(fold, embed.order, embed.horizon, spd)
        test_rows = plan.test_rows(fold, embed.order, embed.horizon, spd)
        if train_rows.size == 0 or test_rows.size == 0:
            raise ConfigError(f"fold {fold} has no usable samples")
        ctx = FoldContext(
            frame=frame,
            target=target,
            pair=pair,
            train_rows=train_rows,
            test_rows=test_rows,
            train_step_mask=plan.train_step_mask(fold, spd),
            rng=method_rng(seed, fold, forecaster.name),
        )
        t0 = time.perf_counter()
        fitted = forecaster.fit(ctx)
        t1 = time.perf_counter()
        test_mean = fitted.predict(ctx, test_rows)
        test_sod = (pair.issue_index[test_rows] % spd).astype(np.int64)

        # Thin residual origins on issue time, anchored at the most recent
        # one: whole-day windows put that origin on the test issues' step
        # of day, so banks cut from these residuals stay conditioned there.
        anchor = int(pair.issue_index[train_rows[-1]])
        keep = (anchor - pair.issue_index[train_rows]) % covariance_stride == 0
        residual_rows = train_rows[keep]
        if hasattr(fitted, "predict_quantiles"):
            quantiles = fitted.predict_quantiles(ctx, test_rows, grid)
            bank = None
            residuals = fitted.predict(ctx, residual_rows) - pair.y[residual_rows]
        else:
            train_pred = fitted.predict(ctx, train_rows)
            train_err = train_pred - pair.y[train_rows]
            bank = build_error_bank(
                train_err, (pair.issue_index[train_rows] % spd), spd, grid
            )
            quantiles = bank.fan(test_mean, test_sod)
            residuals = train_err[keep]
        t2 = time.perf_counter()

        folds.append(
            FoldForecast(
                fold=fold,
                test=ForecastResult(
                    grid, test_mean, quantiles, pair.issue_index[test_rows]
                ),
                test_truth=pair.y[test_rows],
                train_residuals=residuals,
                train_residual_issues=pair.issue_index[residual_rows],
                bank=bank,
                timing={"fit_s": t1 - t0, "predict_s": t2 - t1},
            )
        )
    return CvResult(
        series=target,
        method=forecaster.name,
        horizon=embed.horizon,
        steps_per_day=spd,
        folds=tuple(folds),
    )
