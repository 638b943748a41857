"""Additive exponential smoothing with daily and weekly seasonality.

The model tracks a level and two additive seasonal profiles (one per
day, one per week) on the weather-detrended series:

    l_t  = a  (z_t - s1_{t-p1} - s2_{t-p2}) + (1 - a)  l_{t-1}
    s1_t = g1 (z_t - l_t - s2_{t-p2})       + (1 - g1) s1_{t-p1}
    s2_t = g2 (z_t - l_t - s1_{t-p1})       + (1 - g2) s2_{t-p2}

and forecasts z(t+j) = l_t + s1 and s2 read at the phase of t+j. A
widely circulated variant couples the weekly update to the daily gain
(weight ``1 - g1`` on the old weekly term); the switch
``coupled_weekly_weight`` reproduces it for comparison, the default
uses the consistent ``1 - g2``.

Seasonal profiles are stored per calendar phase (instant modulo
period), so the recursion can skip instants that are off limits for
training and resume later at the correct phase. Smoothing gains are
chosen per step ahead: one shared state sweep serves all horizons, and
each horizon picks the gain triple with the lowest squared forecast
error over sampled training origins, followed by one local grid
refinement.
"""

import numpy as np
from numba import njit

from ..errors import ConfigError, DataError
from .base import FoldContext
from .detrend import LinearDetrend, fit_detrend

DEFAULT_GAIN_GRID = (0.02, 0.05, 0.12, 0.25, 0.5, 0.8)


@njit(cache=True)
def _sweep_fit(z, steps, origin_flag, horizon, p1, p2,
               alpha, g1, g2, w2, level, s1, s2, sse):
    """Advance all gain combinations jointly, accumulating per-horizon SSE."""
    n_c = alpha.size
    for k in range(steps.size):
        t = steps[k]
        i1 = t % p1
        i2 = t % p2
        zt = z[t]
        for c in range(n_c):
            old1 = s1[c, i1]
            old2 = s2[c, i2]
            lev = alpha[c] * (zt - old1 - old2) + (1.0 - alpha[c]) * level[c]
            s1[c, i1] = g1[c] * (zt - lev - old2) + (1.0 - g1[c]) * old1
            s2[c, i2] = g2[c] * (zt - lev - old1) + w2[c] * old2
            level[c] = lev
        if origin_flag[k]:
            for c in range(n_c):
                for j in range(1, horizon + 1):
                    f = level[c] + s1[c, (t + j) % p1] + s2[c, (t + j) % p2]
                    err = f - z[t + j]
                    sse[c, j - 1] += err * err


@njit(cache=True)
def _sweep_one(z, steps, origin_flag, j_values, p1, p2,
               alpha, g1, g2, w2, level, s1, s2,
               forecasts, snap_steps, snap_pos, snap_level, snap_s1, snap_s2):
    """Advance one gain combination, storing forecasts and state snapshots.

    ``forecasts[i, m]`` receives the prediction ``j_values[m]`` steps
    ahead from the i-th flagged origin. ``snap_steps`` are instants at
    which the state is dumped before consuming any update at or beyond
    that instant; ``snap_pos`` additionally records how many updates
    had been consumed (unused slots stay -1).
    """
    si = 0
    oi = 0
    for k in range(steps.size):
        t = steps[k]
        while si < snap_steps.size and snap_steps[si] < t:
            snap_level[si] = level[0]
            snap_s1[si] = s1
            snap_s2[si] = s2
            snap_pos[si] = k
            si += 1
        i1 = t % p1
        i2 = t % p2
        zt = z[t]
        old1 = s1[i1]
        old2 = s2[i2]
        lev = alpha * (zt - old1 - old2) + (1.0 - alpha) * level[0]
        s1[i1] = g1 * (zt - lev - old2) + (1.0 - g1) * old1
        s2[i2] = g2 * (zt - lev - old1) + w2 * old2
        level[0] = lev
        if origin_flag[k]:
            for m in range(j_values.size):
                j = j_values[m]
                forecasts[oi, m] = level[0] + s1[(t + j) % p1] + s2[(t + j) % p2]
            oi += 1
    while si < snap_steps.size:
        snap_level[si] = level[0]
        snap_s1[si] = s1
        snap_s2[si] = s2
        snap_pos[si] = steps.size
        si += 1


def initial_state(z: np.ndarray, steps: np.ndarray, p1: int, p2: int):
    """Pinned startup: level from the first daily cycle, daily profile
    from up to the first week of training instants, weekly profile zero."""
    head = steps[: min(p1, steps.size)]
    level = float(z[head].mean())
    first = steps[: min(7 * p1, steps.size)]
    s1 = np.zeros(p1)
    cnt = np.zeros(p1)
    np.add.at(s1, first % p1, z[first] - level)
    np.add.at(cnt, first % p1, 1.0)
    s1 = s1 / np.maximum(cnt, 1.0)
    s1 -= s1.mean()
    return level, s1, np.zeros(p2)


def hw_filter(
    z: np.ndarray,
    steps: np.ndarray,
    p1: int,
    p2: int,
    alpha: float,
    gamma1: float,
    gamma2: float,
    state=None,
    coupled_weekly_weight: bool = False,
):
    """Run the recursion over ``steps`` and return (level, s1, s2).

    Reference entry point for validating the jitted sweeps; also handy
    for warm-starting experiments. ``state`` defaults to
    :func:`initial_state` on the given instants.
    """
    if state is None:
        level, s1, s2 = initial_state(z, steps, p1, p2)
    else:
        level, s1, s2 = state
        s1 = s1.copy()
        s2 = s2.copy()
    w2 = (1.0 - gamma1) if coupled_weekly_weight else (1.0 - gamma2)
    lev = np.array([level])
    _sweep_one(
        z, steps.astype(np.int64), np.zeros(steps.size, dtype=np.bool_),
        np.empty(0, dtype=np.int64), p1, p2,
        float(alpha), float(gamma1), float(gamma2), float(w2),
        lev, s1, s2,
        np.empty((0, 0)), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
        np.empty(0), np.empty((0, p1)), np.empty((0, p2)),
    )
    return float(lev[0]), s1, s2


def _refine_values(winners: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Winner values plus geometric midpoints toward their grid neighbours."""
    out = set()
    for w in np.unique(winners):
        out.add(float(w))
        pos = int(np.searchsorted(grid, w))
        if pos > 0:
            out.add(float(np.sqrt(w * grid[pos - 1])))
        if pos < grid.size - 1:
            out.add(float(np.sqrt(w * grid[pos + 1])))
    return np.array(sorted(out))


class HoltWintersForecaster:
    """Per-horizon tuned double-seasonal smoother.

    Parameters
    ----------
    detrend_columns : weather columns removed by a linear fit before
        smoothing (empty tuple disables detrending).
    gain_grid : candidate values for all three smoothing gains.
    origin_stride : SSE is evaluated every this-many training origins.
    refine : add one local grid-refinement pass around the winners.
    coupled_weekly_weight : reproduce the variant that weights the old
        weekly term by ``1 - gamma1`` instead of ``1 - gamma2``.
    """

    name = "holt_winters"

    def __init__(
        self,
        detrend_columns: tuple[str, ...] = ("ghi", "temp"),
        gain_grid: tuple[float, ...] = DEFAULT_GAIN_GRID,
        origin_stride: int = 6,
        refine: bool = True,
        coupled_weekly_weight: bool = False,
        daily_period: int | None = None,
        weekly_period: int | None = None,
    ):
        grid = np.asarray(gain_grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ConfigError("gain grid must be increasing with >= 2 values")
        if grid[0] <= 0.0 or grid[-1] >= 1.0:
            raise ConfigError("gains must lie strictly inside (0, 1)")
        if origin_stride < 1:
            raise ConfigError("origin_stride must be positive")
        self.detrend_columns = tuple(detrend_columns)
        self.gain_grid = grid
        self.origin_stride = int(origin_stride)
        self.refine = bool(refine)
        self.coupled_weekly_weight = bool(coupled_weekly_weight)
        self.daily_period = daily_period
        self.weekly_period = weekly_period

    def _periods(self, ctx: FoldContext) -> tuple[int, int]:
        p1 = self.daily_period or ctx.steps_per_day
        p2 = self.weekly_period or 7 * ctx.steps_per_day
        if p2 % p1 != 0:
            raise ConfigError("weekly period must be a multiple of the daily one")
        return p1, p2

    def _evaluate(self, z, steps, origin_flag, horizon, p1, p2, combos):
        alpha, g1, g2 = (np.ascontiguousarray(c) for c in combos.T)
        w2 = (1.0 - g1) if self.coupled_weekly_weight else (1.0 - g2)
        n_c = alpha.size
        level0, s1_0, s2_0 = initial_state(z, steps, p1, p2)
        level = np.full(n_c, level0)
        s1 = np.tile(s1_0, (n_c, 1))
        s2 = np.tile(s2_0, (n_c, 1))
        sse = np.zeros((n_c, horizon))
        _sweep_fit(z, steps, origin_flag, horizon, p1, p2,
                   alpha, g1, g2, w2, level, s1, s2, sse)
        return sse

    def fit(self, ctx: FoldContext) -> "FittedHoltWinters":
        ctx.validate()
        p1, p2 = self._periods(ctx)
        horizon = ctx.horizon
        if self.detrend_columns:
            trend_model = fit_detrend(
                ctx.frame, ctx.target, self.detrend_columns, ctx.train_step_mask
            )
            z = trend_model.residual(ctx.frame, ctx.target)
            trend = trend_model.trend(ctx.frame)
        else:
            trend_model = None
            z = np.asarray(ctx.frame[ctx.target], dtype=np.float64)
            trend = np.zeros(ctx.frame.n_steps)

        steps = np.where(ctx.train_step_mask)[0].astype(np.int64)
        if steps.size < p1:
            raise DataError("training days too few for the daily period")
        train_issues = np.asarray(ctx.issues(ctx.train_rows), dtype=np.int64)
        sampled = set(train_issues[:: self.origin_stride].tolist())
        fit_flag = np.array([t in sampled for t in steps], dtype=np.bool_)

        grid = self.gain_grid
        mesh = np.meshgrid(grid, grid, grid, indexing="ij")
        combos = np.column_stack([m.ravel() for m in mesh])
        sse = self._evaluate(z, steps, fit_flag, horizon, p1, p2, combos)
        if self.refine:
            best = combos[np.argmin(sse, axis=0)]
            refined = [
                _refine_values(best[:, col], grid) for col in range(3)
            ]
            mesh = np.meshgrid(*refined, indexing="ij")
            combos2 = np.column_stack([m.ravel() for m in mesh])
            sse2 = self._evaluate(z, steps, fit_flag, horizon, p1, p2, combos2)
            combos = np.vstack([combos, combos2])
            sse = np.vstack([sse, sse2])
        winner = np.argmin(sse, axis=0)  # per step ahead
        params = combos[winner]  # (horizon, 3)

        cache = self._materialize(
            ctx, z, trend, steps, train_issues, params, p1, p2
        )
        return FittedHoltWinters(trend_model, params, cache)

    def _materialize(self, ctx, z, trend, steps, train_issues, params, p1, p2):
        """Forecast every fold origin with its per-horizon winning gains."""
        horizon = ctx.horizon
        test_issues = np.asarray(ctx.issues(ctx.test_rows), dtype=np.int64)
        all_issues = np.concatenate([train_issues, test_issues])
        cache = {int(t): np.full(horizon, np.nan) for t in all_issues}

        train_flag = np.isin(steps, train_issues)
        order = ctx.order
        uniq, inverse = np.unique(params, axis=0, return_inverse=True)
        for u, triple in enumerate(uniq):
            j_values = np.where(inverse == u)[0] + 1  # steps ahead
            a, g1, g2 = (float(v) for v in triple)
            w2 = (1.0 - g1) if self.coupled_weekly_weight else (1.0 - g2)
            level0, s1_0, s2_0 = initial_state(z, steps, p1, p2)
            lev = np.array([level0])
            s1 = s1_0.copy()
            s2 = s2_0.copy()
            fc = np.empty((train_issues.size, j_values.size))
            snap_pos = np.full(test_issues.size, -1, dtype=np.int64)
            snap_level = np.empty(test_issues.size)
            snap_s1 = np.empty((test_issues.size, p1))
            snap_s2 = np.empty((test_issues.size, p2))
            _sweep_one(
                z, steps, train_flag, j_values.astype(np.int64), p1, p2,
                a, g1, g2, w2, lev, s1, s2,
                fc, test_issues, snap_pos, snap_level, snap_s1, snap_s2,
            )
            for i, t in enumerate(train_issues):
                row = cache[int(t)]
                row[j_values - 1] = fc[i] + trend[t + j_values]
            for i, t in enumerate(test_issues):
                t = int(t)
                lev_t = snap_level[i]
                s1_t = snap_s1[i].copy()
                s2_t = snap_s2[i].copy()
                consumed = steps[: snap_pos[i]]
                last = consumed[-1] if consumed.size else -1
                for s in range(max(t - order + 1, last + 1), t + 1):
                    if ctx.train_step_mask[s]:
                        continue
                    i1 = s % p1
                    i2 = s % p2
                    old1 = s1_t[i1]
                    old2 = s2_t[i2]
                    lev_t = a * (z[s] - old1 - old2) + (1.0 - a) * lev_t
                    s1_t[i1] = g1 * (z[s] - lev_t - old2) + (1.0 - g1) * old1
                    s2_t[i2] = g2 * (z[s] - lev_t - old1) + w2 * old2
                row = cache[t]
                for m, j in enumerate(j_values):
                    row[j - 1] = (
                        lev_t + s1_t[(t + j) % p1] + s2_t[(t + j) % p2]
                        + trend[t + j]
                    )
        return cache


class FittedHoltWinters:
    """Holds per-horizon gains and fold-origin forecasts."""

    def __init__(self, trend_model: LinearDetrend | None,
                 params: np.ndarray, cache: dict):
        self.trend_model = trend_model
        self.params = params
        self._cache = cache

    def predict(self, ctx: FoldContext, rows: np.ndarray) -> np.ndarray:
        issues = ctx.issues(rows)
        out = np.empty((issues.size, ctx.horizon))
        for i, t in enumerate(issues):
            try:
                out[i] = self._cache[int(t)]
            except KeyError:
                raise ConfigError(
                    "smoother forecasts are materialized for fold origins only"
                ) from None
        return out
