"""Nearest-neighbour regression over embedded samples.

Each query sample is matched against the fold's training samples in
standardized feature space (statistics from the training rows only).
The K nearest neighbours, shared across all forecast steps, are
combined with inverse-distance weights into a point forecast, and
their target trajectories define a weighted empirical distribution
from which the quantile fans are read directly. The family therefore
never relies on the banked-error machinery.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ConfigError
from .base import FoldContext
from .results import QuantileGrid


def weighted_quantile(
    values: np.ndarray, weights: np.ndarray, levels: np.ndarray
) -> np.ndarray:
    """Step-CDF quantiles: smallest value whose cumulative weight >= level.

    ``values`` (n,) with positive ``weights`` (n,); returns one value
    per level.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    cum = np.cumsum(weights[order])
    cum /= cum[-1]
    idx = np.searchsorted(cum, levels, side="left")
    return v[np.minimum(idx, v.size - 1)]


@dataclass(frozen=True)
class KnnForecaster:
    """Inverse-distance weighted K-nearest-neighbour forecaster."""

    n_neighbors: int = 50
    name: str = "knn"

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ConfigError("need at least one neighbour")

    def fit(self, ctx: FoldContext) -> "FittedKnn":
        ctx.validate()
        x = ctx.pair.x[ctx.train_rows]
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std == 0.0] = 1.0
        k = self.n_neighbors
        if k > x.shape[0]:
            warnings.warn(
                f"requested {k} neighbours but only {x.shape[0]} training "
                "samples; clamping",
                stacklevel=2,
            )
            k = x.shape[0]
        return FittedKnn(self, (x - mean) / std, mean, std, k)


class FittedKnn:
    def __init__(self, spec, train_x, mean, std, k):
        self.spec = spec
        self.train_x = train_x
        self.mean = mean
        self.std = std
        self.k = k

    def _neighbors(self, ctx: FoldContext, rows: np.ndarray):
        """Neighbour indices (into train_rows) and weights per query row.

        A query that is itself a training sample is excluded from its
        own neighbourhood, so training-time predictions stay honest.
        """
        q = (ctx.pair.x[rows] - self.mean) / self.std
        d = cdist(q, self.train_x)
        train_pos = {int(r): i for i, r in enumerate(ctx.train_rows)}
        for qi, row in enumerate(rows):
            pos = train_pos.get(int(row))
            if pos is not None:
                d[qi, pos] = np.inf
        k = min(self.k, self.train_x.shape[0] - 1) or 1
        nn = np.argpartition(d, k - 1, axis=1)[:, :k]
        nd = np.take_along_axis(d, nn, axis=1)
        with np.errstate(divide="ignore"):
            w = 1.0 / nd
        # exact matches dominate: weight them uniformly, others drop out
        exact = np.isinf(w)
        has_exact = exact.any(axis=1)
        w[has_exact] = exact[has_exact].astype(np.float64)
        return nn, w

    def predict(self, ctx: FoldContext, rows: np.ndarray) -> np.ndarray:
        targets = ctx.pair.y[ctx.train_rows]
        out = np.empty((rows.size, ctx.horizon))
        # chunk queries to bound the distance-matrix footprint
        for lo in range(0, rows.size, 512):
            chunk = rows[lo : lo + 512]
            nn, w = self._neighbors(ctx, chunk)
            out[lo : lo + 512] = np.einsum(
                "qk,qkh->qh", w, targets[nn]
            ) / w.sum(axis=1, keepdims=True)
        return out

    def predict_quantiles(
        self, ctx: FoldContext, rows: np.ndarray, grid: QuantileGrid
    ) -> np.ndarray:
        """Fans (n_levels, n_rows, horizon) from neighbour trajectories."""
        nn, w = self._neighbors(ctx, rows)
        targets = ctx.pair.y[ctx.train_rows]
        out = np.empty((grid.n_levels, rows.size, ctx.horizon))
        for qi in range(rows.size):
            traj = targets[nn[qi]]  # (k, horizon)
            for j in range(ctx.horizon):
                out[:, qi, j] = weighted_quantile(
                    traj[:, j], w[qi], grid.levels
                )
        return out
