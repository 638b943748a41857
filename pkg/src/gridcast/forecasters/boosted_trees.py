"""Histogram-based gradient-boosted regression trees.

A self-contained boosting implementation tailored to the embedded
forecasting samples: features are pre-binned once per fold into small
integer codes, every tree is grown leaf-wise on the binned matrix with
squared-error gain, and sibling histograms come from subtraction
rather than a second scan. One independent model is fitted per
forecast step, all sharing the binned matrix, histogram buffers and
the per-tree row/feature subsample stream.

Kernels are compiled with numba in single-threaded mode, keeping runs
bit-reproducible for a fixed seed.
"""

import numpy as np
from numba import njit

from ..errors import ConfigError
from .base import FoldContext

MAX_BINS = 256


@njit(cache=True)
def _hist_build(binned, rows, lo, hi, grad, feats, hg, hn):
    hg[:] = 0.0
    hn[:] = 0
    for r in range(lo, hi):
        row = rows[r]
        g = grad[row]
        for fi in range(feats.size):
            b = binned[row, feats[fi]]
            hg[fi, b] += g
            hn[fi, b] += 1


@njit(cache=True)
def _best_split(hg, hn, total_g, total_n, min_leaf):
    best_gain = 1e-12
    best_f = -1
    best_b = -1
    parent = total_g * total_g / total_n
    for f in range(hg.shape[0]):
        gl = 0.0
        nl = 0
        for b in range(hg.shape[1] - 1):
            gl += hg[f, b]
            nl += hn[f, b]
            nr = total_n - nl
            if nr < min_leaf:
                break
            if nl < min_leaf:
                continue
            gr = total_g - gl
            gain = gl * gl / nl + gr * gr / nr - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    return best_f, best_b, best_gain


@njit(cache=True)
def _partition(binned, rows, lo, hi, feat, thr_bin, scratch):
    nl = 0
    for r in range(lo, hi):
        if binned[rows[r], feat] <= thr_bin:
            nl += 1
    li = lo
    ri = lo + nl
    for r in range(lo, hi):
        row = rows[r]
        if binned[row, feat] <= thr_bin:
            scratch[li] = row
            li += 1
        else:
            scratch[ri] = row
            ri += 1
    rows[lo:hi] = scratch[lo:hi]
    return lo + nl


@njit(cache=True)
def _apply_tree_binned(binned, rows, feat, thr_bin, left, right, value, out, lr):
    for i in range(rows.size):
        row = rows[i]
        node = 0
        while feat[node] >= 0:
            if binned[row, feat[node]] <= thr_bin[node]:
                node = left[node]
            else:
                node = right[node]
        out[row] += lr * value[node]


@njit(cache=True)
def _apply_tree_raw(x, feat, thr_val, left, right, value, out, lr):
    for i in range(x.shape[0]):
        node = 0
        while feat[node] >= 0:
            if x[i, feat[node]] < thr_val[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += lr * value[node]


def bin_features(x_train: np.ndarray, x_all: np.ndarray, max_bins: int = MAX_BINS):
    """Quantile bin edges from training rows; codes for all rows.

    A value lands in bin ``searchsorted(edges, v, 'right')``, so the
    raw-space traversal rule for "code <= b" is ``v < edges[b]``.
    """
    n_feat = x_train.shape[1]
    binned = np.empty(x_all.shape, dtype=np.uint8)
    edges_per_feat = []
    qs = np.linspace(0.0, 1.0, max_bins + 1)[1:-1]
    for f in range(n_feat):
        edges = np.unique(np.quantile(x_train[:, f], qs))
        binned[:, f] = np.searchsorted(edges, x_all[:, f], side="right")
        edges_per_feat.append(edges)
    return binned, edges_per_feat


class _Tree:
    __slots__ = ("feat", "thr_bin", "thr_val", "left", "right", "value")

    def __init__(self, n_nodes):
        self.feat = np.full(n_nodes, -1, dtype=np.int32)
        self.thr_bin = np.zeros(n_nodes, dtype=np.uint8)
        self.thr_val = np.zeros(n_nodes)
        self.left = np.zeros(n_nodes, dtype=np.int32)
        self.right = np.zeros(n_nodes, dtype=np.int32)
        self.value = np.zeros(n_nodes)


def grow_tree(
    binned, rows, grad, feats, edges_per_feat,
    min_leaf, max_leaves, scratch, hg_pool, hn_pool,
) -> _Tree:
    """Leaf-wise growth: repeatedly split the leaf with the best gain.

    ``hg_pool``/``hn_pool`` are reusable (2*max_leaves, n_feats, bins)
    histogram buffers; only slices that get scanned are reset.
    """
    tree = _Tree(2 * max_leaves)
    span = {0: (0, rows.size)}
    totals = {}
    cand = {}

    def summarize(node):
        lo, hi = span[node]
        g = float(hg_pool[node, 0].sum())
        n = hi - lo
        totals[node] = (g, n)
        f, b, gain = _best_split(hg_pool[node], hn_pool[node], g, n, min_leaf)
        cand[node] = (gain, f, b)
        tree.value[node] = g / n

    _hist_build(binned, rows, 0, rows.size, grad, feats, hg_pool[0], hn_pool[0])
    summarize(0)
    leaves = [0]
    next_id = 1
    while len(leaves) < max_leaves:
        best_leaf = -1
        best_gain = 1e-12
        for leaf in leaves:
            if cand[leaf][1] >= 0 and cand[leaf][0] > best_gain:
                best_gain = cand[leaf][0]
                best_leaf = leaf
        if best_leaf < 0:
            break
        _, fi, b = cand[best_leaf]
        lo, hi = span[best_leaf]
        feat_global = int(feats[fi])
        mid = _partition(binned, rows, lo, hi, feat_global, b, scratch)
        lid, rid = next_id, next_id + 1
        next_id += 2
        tree.feat[best_leaf] = feat_global
        tree.thr_bin[best_leaf] = b
        edges = edges_per_feat[feat_global]
        tree.thr_val[best_leaf] = edges[b] if b < edges.size else np.inf
        tree.left[best_leaf] = lid
        tree.right[best_leaf] = rid
        span[lid] = (lo, mid)
        span[rid] = (mid, hi)
        small, big = (lid, rid) if mid - lo <= hi - mid else (rid, lid)
        s_lo, s_hi = span[small]
        _hist_build(binned, rows, s_lo, s_hi, grad, feats,
                    hg_pool[small], hn_pool[small])
        np.subtract(hg_pool[best_leaf], hg_pool[small], out=hg_pool[big])
        np.subtract(hn_pool[best_leaf], hn_pool[small], out=hn_pool[big])
        summarize(lid)
        summarize(rid)
        leaves.remove(best_leaf)
        leaves.extend((lid, rid))
    out = _Tree(next_id)
    for name in _Tree.__slots__:
        getattr(out, name)[:] = getattr(tree, name)[:next_id]
    return out


class BoostedTreesForecaster:
    """One boosted model per forecast step over shared binned features."""

    name = "boosted_trees"

    def __init__(
        self,
        n_trees: int = 300,
        max_leaves: int = 31,
        learning_rate: float = 0.1,
        min_leaf: int = 20,
        subsample: float = 1.0,
        colsample: float = 1.0,
        fit_row_stride: int = 1,
        max_bins: int = MAX_BINS,
    ):
        if n_trees < 1 or max_leaves < 2:
            raise ConfigError("need n_trees >= 1 and max_leaves >= 2")
        if not (0.0 < learning_rate <= 1.0):
            raise ConfigError("learning rate must be in (0, 1]")
        if not (0.0 < subsample <= 1.0 and 0.0 < colsample <= 1.0):
            raise ConfigError("subsample and colsample must be in (0, 1]")
        if max_bins > MAX_BINS or max_bins < 2:
            raise ConfigError(f"max_bins must be in [2, {MAX_BINS}]")
        if min_leaf < 1 or fit_row_stride < 1:
            raise ConfigError("min_leaf and fit_row_stride must be positive")
        self.n_trees = int(n_trees)
        self.max_leaves = int(max_leaves)
        self.learning_rate = float(learning_rate)
        self.min_leaf = int(min_leaf)
        self.subsample = float(subsample)
        self.colsample = float(colsample)
        self.fit_row_stride = int(fit_row_stride)
        self.max_bins = int(max_bins)

    def fit(self, ctx: FoldContext) -> "FittedBoostedTrees":
        ctx.validate()
        x_all = ctx.pair.x
        train_rows = ctx.train_rows
        fit_rows = train_rows[:: self.fit_row_stride]
        binned, edges = bin_features(x_all[fit_rows], x_all, self.max_bins)
        n_feat = x_all.shape[1]
        n_fit = fit_rows.size
        n_sub = min(max(int(round(self.subsample * n_fit)), 2 * self.min_leaf), n_fit)
        n_cols = max(int(round(self.colsample * n_feat)), 1)
        horizon = ctx.horizon
        rng = ctx.rng

        base = ctx.pair.y[fit_rows].mean(axis=0)  # per-step means
        serve_rows = np.concatenate([train_rows, ctx.test_rows]).astype(np.int64)
        pred = np.tile(base, (ctx.pair.n_samples, 1))
        cur = np.empty(ctx.pair.n_samples)
        scratch = np.empty(n_fit, dtype=np.int64)
        hg_pool = np.zeros((2 * self.max_leaves, n_cols, self.max_bins))
        hn_pool = np.zeros((2 * self.max_leaves, n_cols, self.max_bins), dtype=np.int64)
        models: list[list[_Tree]] = []
        y = ctx.pair.y
        # one subsample/colsample draw per tree index, shared by all
        # steps so their models see comparable data slices
        row_draws = [
            rng.choice(n_fit, size=n_sub, replace=False) if n_sub < n_fit
            else np.arange(n_fit)
            for _ in range(self.n_trees)
        ]
        col_draws = [
            np.sort(rng.choice(n_feat, size=n_cols, replace=False)).astype(np.int64)
            if n_cols < n_feat
            else np.arange(n_feat, dtype=np.int64)
            for _ in range(self.n_trees)
        ]
        for j in range(horizon):
            target = y[:, j]
            cur[:] = base[j]
            trees = []
            for m in range(self.n_trees):
                rows_work = fit_rows[row_draws[m]].astype(np.int64)
                grad = target - cur
                tree = grow_tree(
                    binned, rows_work, grad, col_draws[m], edges,
                    self.min_leaf, self.max_leaves, scratch, hg_pool, hn_pool,
                )
                _apply_tree_binned(
                    binned, serve_rows, tree.feat, tree.thr_bin,
                    tree.left, tree.right, tree.value, cur, self.learning_rate,
                )
                trees.append(tree)
            pred[serve_rows, j] = cur[serve_rows]
            models.append(trees)
        cache = {int(ctx.pair.issue_index[r]): pred[r] for r in serve_rows}
        return FittedBoostedTrees(self, models, edges, base, cache)


class FittedBoostedTrees:
    def __init__(self, spec, models, edges, base, cache):
        self.spec = spec
        self.models = models
        self.edges = edges
        self.base = base
        self._cache = cache

    def predict(self, ctx: FoldContext, rows: np.ndarray) -> np.ndarray:
        issues = ctx.issues(rows)
        out = np.empty((rows.size, ctx.horizon))
        misses = []
        for i, t in enumerate(issues):
            hit = self._cache.get(int(t))
            if hit is None:
                misses.append(i)
            else:
                out[i] = hit
        if misses:
            x = np.ascontiguousarray(ctx.pair.x[rows[misses]])
            for j, trees in enumerate(self.models):
                col = np.full(x.shape[0], self.base[j])
                for tree in trees:
                    _apply_tree_raw(
                        x, tree.feat, tree.thr_val, tree.left, tree.right,
                        tree.value, col, self.spec.learning_rate,
                    )
                out[misses, j] = col
        return out
