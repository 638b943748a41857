"""Blocked cross-validation over day-aligned sequences.

Scores are estimated on 10-day sequences tiled across the span: within
each sequence, days 1..7 feed the training set, day 8 is reserved as
history for the test sample, day 9 is the test day and day 10 is a
gap that separates consecutive sequences. Fold ``f`` (0-based) shifts
the tiling by ``f`` days, so ``k`` folds test on ``k`` distinct days
per 10-day block.

A training sample may be used only if its whole footprint (lag window
plus forecast targets) lies inside one sequence's training days; a
test sample must draw its lag window entirely from day 8 and its
targets entirely from day 9. With order and horizon both equal to one
day this leaves exactly one test sample per sequence, issued at the
last instant of day 8.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DAYS_PER_SEQUENCE = 10
TRAIN_DAYS_PER_SEQUENCE = 7


@dataclass(frozen=True)
class FoldSequence:
    """One 10-day block: 7 train days, embed day, test day, gap day."""

    start_day: int

    @property
    def train_days(self) -> range:
        return range(self.start_day, self.start_day + TRAIN_DAYS_PER_SEQUENCE)

    @property
    def embed_day(self) -> int:
        return self.start_day + 7

    @property
    def test_day(self) -> int:
        return self.start_day + 8

    @property
    def gap_day(self) -> int:
        return self.start_day + 9


@dataclass(frozen=True)
class FoldPlan:
    """All fold sequences for a span of ``n_days`` civil days."""

    n_days: int
    folds: tuple[tuple[FoldSequence, ...], ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_rows(
        self, fold: int, order: int, horizon: int, steps_per_day: int
    ) -> np.ndarray:
        """Sample indices whose footprint sits inside the fold's train days.

        Indices refer to rows of the embedding built from the same frame
        (sample ``i`` is issued at instant ``t = order + i``).
        """
        e, h = order, horizon
        t_max_global = self.n_days * steps_per_day - h - 1
        chunks = []
        for seq in self.folds[fold]:
            lo = seq.start_day * steps_per_day
            hi = (seq.start_day + TRAIN_DAYS_PER_SEQUENCE) * steps_per_day - 1
            # footprint [t-e+1, t+h] within [lo, hi], t a valid issue instant
            t0 = max(lo + e - 1, e)
            t1 = min(hi - h, t_max_global)
            if t1 >= t0:
                chunks.append(np.arange(t0 - e, t1 - e + 1))
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)

    def test_rows(
        self, fold: int, order: int, horizon: int, steps_per_day: int
    ) -> np.ndarray:
        """Sample indices whose window fills day 8 and targets lie in day 9."""
        e, h = order, horizon
        if e > steps_per_day or h > steps_per_day:
            raise ConfigError(
                "test samples need order and horizon of at most one day"
            )
        t_max_global = self.n_days * steps_per_day - h - 1
        rows = []
        for seq in self.folds[fold]:
            d8_lo = seq.embed_day * steps_per_day
            d8_hi = d8_lo + steps_per_day - 1
            d9_hi = d8_hi + steps_per_day
            # window in day 8: t-e+1 >= d8_lo and t <= d8_hi
            # targets in day 9: t+1 >= d8_hi+1 and t+h <= d9_hi
            t0 = max(d8_lo + e - 1, d8_hi, e)
            t1 = min(d8_hi, d9_hi - h, t_max_global)
            for t in range(t0, t1 + 1):
                rows.append(t - e)
        return np.asarray(rows, dtype=np.int64)

    def train_step_mask(self, fold: int, steps_per_day: int) -> np.ndarray:
        """Boolean mask over frame steps that belong to train days."""
        mask = np.zeros(self.n_days * steps_per_day, dtype=bool)
        for seq in self.folds[fold]:
            lo = seq.start_day * steps_per_day
            mask[lo : lo + TRAIN_DAYS_PER_SEQUENCE * steps_per_day] = True
        return mask


def build_folds(n_days: int, k: int = 10) -> FoldPlan:
    """Tile 10-day sequences across ``n_days`` with one fold per day offset.

    Fold ``f`` starts its first sequence on day ``f``; further sequences
    follow every 10 days while they fit completely. Every fold must own
    at least one full sequence, so ``n_days >= 10 + k - 1``.
    """
    if k < 1:
        raise ConfigError("need at least one fold")
    if k > DAYS_PER_SEQUENCE:
        raise ConfigError(f"at most {DAYS_PER_SEQUENCE} folds (one per day offset)")
    if n_days < DAYS_PER_SEQUENCE + k - 1:
        raise ConfigError(
            f"{n_days} days cannot host {k} folds of full 10-day sequences"
        )
    folds = []
    for f in range(k):
        starts = range(f, n_days - DAYS_PER_SEQUENCE + 1, DAYS_PER_SEQUENCE)
        folds.append(tuple(FoldSequence(s) for s in starts))
    return FoldPlan(n_days, tuple(folds))


def verify_hygiene(
    plan: FoldPlan, order: int, horizon: int, steps_per_day: int
) -> None:
    """Exhaustively check train/test separation at the instant level.

    Raises :class:`ConfigError` if any training sample's footprint
    touches an instant of a test sample's window or targets, or if a
    test sample leaks outside its embed/test days.
    """
    e, h = order, horizon
    n_steps = plan.n_days * steps_per_day
    for fold in range(plan.k):
        train_mask = plan.train_step_mask(fold, steps_per_day)
        touched = np.zeros(n_steps, dtype=bool)
        for i in plan.train_rows(fold, e, h, steps_per_day):
            t = e + int(i)
            touched[t - e + 1 : t + h + 1] = True
        if (touched & ~train_mask).any():
            raise ConfigError(f"fold {fold}: train footprint leaves train days")
        for i in plan.test_rows(fold, e, h, steps_per_day):
            t = e + int(i)
            window = np.arange(t - e + 1, t + 1)
            targets = np.arange(t + 1, t + h + 1)
            if touched[t - e + 1 : t + h + 1].any():
                raise ConfigError(f"fold {fold}: test sample overlaps train footprint")
            days_w = window // steps_per_day
            days_t = targets // steps_per_day
            seq_embed = {s.embed_day for s in plan.folds[fold]}
            seq_test = {s.test_day for s in plan.folds[fold]}
            if not set(days_w.tolist()) <= seq_embed:
                raise ConfigError(f"fold {fold}: test window outside embed day")
            if not set(days_t.tolist()) <= seq_test:
                raise ConfigError(f"fold {fold}: test targets outside test day")
