"""Aggregation structure of a metered distribution grid.

The benchmark arranges ``n_bottom`` metered nodes into a fixed tree:
one grid total on top, a layer of partial aggregations below it, and
the bottom nodes as leaves. The whole structure is captured by a
summation matrix ``S`` with one row per series and one column per
bottom node, so that all series are ``S @ y_bottom``. A vector of
series values is coherent exactly when it lies in the column space of
``S``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Hierarchy:
    """Summation structure over bottom-level series.

    ``s_matrix`` has shape (n_series, n_bottom); its last ``n_bottom``
    rows are the identity (bottom series sum to themselves) and the rows
    above it describe the aggregations, coarsest first.
    """

    s_matrix: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        s = np.asarray(self.s_matrix, dtype=np.float64)
        if s.ndim != 2:
            raise ConfigError("summation matrix must be 2-D")
        n_series, n_bottom = s.shape
        if n_series < n_bottom or n_bottom < 1:
            raise ConfigError("summation matrix needs at least as many rows as columns")
        if not np.array_equal(s[n_series - n_bottom :], np.eye(n_bottom)):
            raise ConfigError("last n_bottom rows of S must be the identity")
        if not np.isin(s, (0.0, 1.0)).all():
            raise ConfigError("summation matrix entries must be 0 or 1")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "s_matrix", s)
        names = self.names or tuple(default_series_names(s))
        if len(names) != n_series:
            raise ConfigError("need one name per series")
        object.__setattr__(self, "names", tuple(names))

    @property
    def n_series(self) -> int:
        return self.s_matrix.shape[0]

    @property
    def n_bottom(self) -> int:
        return self.s_matrix.shape[1]

    @property
    def n_upper(self) -> int:
        return self.n_series - self.n_bottom

    @property
    def bottom_slice(self) -> slice:
        return slice(self.n_upper, self.n_series)

    @property
    def a_matrix(self) -> np.ndarray:
        """Aggregation rows of S: upper series = A @ bottom."""
        return self.s_matrix[: self.n_upper]

    def aggregate(self, bottom: np.ndarray) -> np.ndarray:
        """Map bottom values (..., n_bottom) to all series (..., n_series)."""
        bottom = np.asarray(bottom, dtype=np.float64)
        if bottom.shape[-1] != self.n_bottom:
            raise ConfigError(
                f"expected last axis of size {self.n_bottom}, got {bottom.shape[-1]}"
            )
        return bottom @ self.s_matrix.T

    def coherence_gap(self, values: np.ndarray) -> float:
        """Largest relative violation of the aggregation identities.

        ``values`` has series on the last axis. Returns
        ``max |upper - A @ bottom| / max(1, max |values|)``.
        """
        values = np.asarray(values, dtype=np.float64)
        upper = values[..., : self.n_upper]
        bottom = values[..., self.n_upper :]
        gap = np.abs(upper - bottom @ self.a_matrix.T)
        scale = max(1.0, float(np.abs(values).max(initial=0.0)))
        return float(gap.max(initial=0.0)) / scale


def default_series_names(s_matrix: np.ndarray) -> list[str]:
    """Name series by role: grid total, aggregation blocks, meters."""
    n_series, n_bottom = np.asarray(s_matrix).shape
    n_upper = n_series - n_bottom
    names = []
    for i in range(n_upper):
        row_sum = int(np.asarray(s_matrix)[i].sum())
        names.append("total" if row_sum == n_bottom else f"agg{i:02d}")
    names.extend(f"node{j:02d}" for j in range(n_bottom))
    # Disambiguate if several all-ones rows exist (degenerate plans).
    seen: dict[str, int] = {}
    out = []
    for n in names:
        if n in seen:
            seen[n] += 1
            out.append(f"{n}_{seen[n]}")
        else:
            seen[n] = 0
            out.append(n)
    return out


def build_summation_matrix(
    n_bottom: int, levels: tuple[int, ...] = (2, 4)
) -> np.ndarray:
    """Assemble S for a total + grouped middle levels + bottom identity.

    Each entry of ``levels`` adds one layer that splits the bottom nodes
    into that many equal contiguous groups, coarsest first. ``n_bottom``
    must be divisible by every group count. The default plan (2, 4) over
    24 nodes yields 1 + 2 + 4 + 24 = 31 series.
    """
    if n_bottom < 1:
        raise ConfigError("n_bottom must be positive")
    blocks = [np.ones((1, n_bottom))]
    for n_groups in levels:
        if n_groups < 1:
            raise ConfigError("group counts must be positive")
        if n_bottom % n_groups != 0:
            raise ConfigError(
                f"cannot split {n_bottom} bottom nodes into {n_groups} equal groups"
            )
        blocks.append(np.kron(np.eye(n_groups), np.ones((1, n_bottom // n_groups))))
    blocks.append(np.eye(n_bottom))
    return np.vstack(blocks)


def build_hierarchy(n_bottom: int, levels: tuple[int, ...] = (2, 4)) -> Hierarchy:
    return Hierarchy(build_summation_matrix(n_bottom, levels))
