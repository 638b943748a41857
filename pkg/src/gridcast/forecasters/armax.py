"""Segment-ensemble ARMA with exogenous inputs.

One ARMAX model is estimated per contiguous 7-day training block using
the two-stage least-squares scheme: a long autoregression (with the
exogenous inputs) first proxies the innovations, then the final
coefficients come from a single regression of the target on its own
lags, the exogenous inputs and the lagged innovation proxies. Blocks
whose autoregressive part is unstable (a companion-matrix eigenvalue
on or outside the unit circle) are dropped with a warning; the
survivors forecast every origin and their predictions are averaged.

Forecasts are recursive: future innovations are set to zero, future
exogenous values are read from the frame, which carries only
information that was available at issue time (aligned weather
forecasts and calendar codes).
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import ConfigError, DataError, NumericError
from .base import FoldContext


@dataclass(frozen=True)
class ArmaxCoefficients:
    """One block's fitted model: y_t = const + ar·y_lags + beta·u_t + ma·eps_lags + eps_t."""

    const: float
    ar: np.ndarray
    ma: np.ndarray
    beta: np.ndarray

    def is_stable(self) -> bool:
        p = self.ar.size
        if p == 0:
            return True
        companion = np.zeros((p, p))
        companion[0] = self.ar
        if p > 1:
            companion[1:, :-1] = np.eye(p - 1)
        return bool(np.all(np.abs(np.linalg.eigvals(companion)) < 1.0))


def long_ar_order(p: int, q: int, block_len: int) -> int:
    """Stage-1 autoregression order: generous but bounded by the block."""
    return int(min(max(24, 2 * (p + q)), block_len // 4))


def fit_armax_block(
    y: np.ndarray, u: np.ndarray, p: int, q: int
) -> ArmaxCoefficients:
    """Two-stage least squares on one contiguous block.

    ``y`` is the block target, ``u`` the (block_len, n_exog) exogenous
    matrix. Stage one fits an AR(m) with exogenous terms to proxy the
    innovations; stage two regresses on lags, exogenous inputs and
    lagged proxies jointly.
    """
    n = y.size
    m = long_ar_order(p, q, n)
    if n <= m + q + p + u.shape[1] + 1:
        raise DataError("block too short for the requested model orders")
    # stage 1: innovation proxies from a long AR with exogenous inputs
    rows = np.arange(m, n)
    x1 = np.column_stack(
        [np.ones(rows.size)]
        + [y[rows - i] for i in range(1, m + 1)]
        + [u[rows]]
    )
    coef1, *_ = np.linalg.lstsq(x1, y[rows], rcond=None)
    eps = np.zeros(n)
    eps[rows] = y[rows] - x1 @ coef1
    # stage 2: joint regression with lagged proxies
    start = m + q
    rows = np.arange(start, n)
    x2 = np.column_stack(
        [np.ones(rows.size)]
        + [y[rows - i] for i in range(1, p + 1)]
        + [u[rows]]
        + [eps[rows - k] for k in range(1, q + 1)]
    )
    coef2, *_ = np.linalg.lstsq(x2, y[rows], rcond=None)
    n_exog = u.shape[1]
    return ArmaxCoefficients(
        const=float(coef2[0]),
        ar=coef2[1 : 1 + p].copy(),
        ma=coef2[1 + p + n_exog : 1 + p + n_exog + q].copy(),
        beta=coef2[1 + p : 1 + p + n_exog].copy(),
    )


@njit(cache=True)
def _filter_innovations(y, exog_term, const, ar, ma, start, stop, eps):
    """Recover innovations over [start, stop) given coefficients.

    The first ``p`` instants of the range get zero innovations (their
    own lags are unavailable); the recursion never reads outside the
    range, so blocks and history windows stay self-contained.
    """
    p = ar.size
    q = ma.size
    for s in range(start, stop):
        if s - start < p:
            eps[s] = 0.0
            continue
        pred = const + exog_term[s]
        for i in range(p):
            pred += ar[i] * y[s - 1 - i]
        for k in range(q):
            idx = s - 1 - k
            if idx >= start:
                pred += ma[k] * eps[idx]
        eps[s] = y[s] - pred


def recursive_forecast(
    y: np.ndarray,
    eps: np.ndarray,
    exog_term: np.ndarray,
    coef: ArmaxCoefficients,
    issues: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Multi-origin recursive forecasts with future innovations at zero."""
    p, q = coef.ar.size, coef.ma.size
    n = issues.size
    ybuf = y[issues[:, None] - np.arange(p)[None, :]]
    ebuf = eps[issues[:, None] - np.arange(q)[None, :]]
    out = np.empty((n, horizon))
    for j in range(1, horizon + 1):
        pred = coef.const + exog_term[issues + j] + ybuf @ coef.ar + ebuf @ coef.ma
        out[:, j - 1] = pred
        if p:
            ybuf = np.column_stack([pred, ybuf[:, :-1]])
        if q:
            ebuf = np.column_stack([np.zeros(n), ebuf[:, :-1]])
    return out


class ArmaxForecaster:
    """Blockwise ARMAX ensemble over the fold's training sequences."""

    name = "armax"

    def __init__(
        self,
        ar_order: int = 6,
        ma_order: int = 5,
        exog_columns: tuple[str, ...] = ("temp", "ghi", "holiday"),
    ):
        if ar_order < 1 or ma_order < 0:
            raise ConfigError("need ar_order >= 1 and ma_order >= 0")
        self.ar_order = int(ar_order)
        self.ma_order = int(ma_order)
        self.exog_columns = tuple(exog_columns)

    def _exog(self, ctx: FoldContext) -> np.ndarray:
        missing = [c for c in self.exog_columns if c not in ctx.frame]
        if missing:
            raise ConfigError(f"exogenous columns missing from frame: {missing}")
        if not self.exog_columns:
            return np.zeros((ctx.frame.n_steps, 0))
        return ctx.frame.matrix(list(self.exog_columns))

    def fit(self, ctx: FoldContext) -> "FittedArmax":
        ctx.validate()
        y = np.asarray(ctx.frame[ctx.target], dtype=np.float64)
        u = self._exog(ctx)
        blocks = _contiguous_blocks(ctx.train_step_mask)
        models = []
        dropped = 0
        for start, stop in blocks:
            coef = fit_armax_block(
                y[start:stop], u[start:stop], self.ar_order, self.ma_order
            )
            if coef.is_stable():
                models.append(coef)
            else:
                dropped += 1
        if dropped:
            warnings.warn(
                f"dropped {dropped} of {len(blocks)} unstable block models",
                stacklevel=2,
            )
        if not models:
            raise NumericError("every block model was unstable")
        return FittedArmax(self, models, blocks, y, u)


def _contiguous_blocks(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open (start, stop) runs of True in the mask."""
    idx = np.where(mask)[0]
    if idx.size == 0:
        return []
    cuts = np.where(np.diff(idx) > 1)[0]
    starts = np.concatenate([[idx[0]], idx[cuts + 1]])
    stops = np.concatenate([idx[cuts] + 1, [idx[-1] + 1]])
    return list(zip(starts.tolist(), stops.tolist()))


class FittedArmax:
    """Ensemble state: per-model innovation tracks over usable history."""

    def __init__(self, spec: ArmaxForecaster, models, blocks, y, u):
        self.spec = spec
        self.models = models
        self.blocks = blocks
        self._y = y
        self._exog_terms = []
        self._eps = []
        for coef in models:
            term = u @ coef.beta if u.shape[1] else np.zeros(y.size)
            eps = np.zeros(y.size)
            for start, stop in blocks:
                _filter_innovations(
                    y, term, coef.const, coef.ar, coef.ma, start, stop, eps
                )
            self._exog_terms.append(term)
            self._eps.append(eps)
        self._filtered_windows: set[tuple[int, int]] = set(blocks)

    def _ensure_window(self, ctx: FoldContext, t: int) -> None:
        """Filter innovations over a non-training history window ending at t."""
        start = max(t - ctx.order + 1, 0)
        key = (start, t + 1)
        if key in self._filtered_windows:
            return
        for coef, term, eps in zip(self.models, self._exog_terms, self._eps):
            _filter_innovations(
                self._y, term, coef.const, coef.ar, coef.ma, start, t + 1, eps
            )
        self._filtered_windows.add(key)

    def predict(self, ctx: FoldContext, rows: np.ndarray) -> np.ndarray:
        issues = np.asarray(ctx.issues(rows), dtype=np.int64)
        for t in issues:
            if not ctx.train_step_mask[t]:
                self._ensure_window(ctx, int(t))
        out = np.zeros((issues.size, ctx.horizon))
        for coef, term, eps in zip(self.models, self._exog_terms, self._eps):
            out += recursive_forecast(
                self._y, eps, term, coef, issues, ctx.horizon
            )
        out /= len(self.models)
        return out
