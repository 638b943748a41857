"""Summation matrix assembly and coherence arithmetic."""

import numpy as np
import pytest

from gridcast import ConfigError, Hierarchy, build_hierarchy, build_summation_matrix


def test_default_plan_24_nodes():
    """24 meters under the (2, 4) plan give 31 series with known row sums."""
    s = build_summation_matrix(24, levels=(2, 4))
    assert s.shape == (31, 24)
    assert s[0].sum() == 24  # grid total
    assert [row.sum() for row in s[1:3]] == [12, 12]
    assert [row.sum() for row in s[3:7]] == [6, 6, 6, 6]
    assert np.array_equal(s[7:], np.eye(24))
    # every bottom node feeds the total, one half and one quarter
    assert np.array_equal(s[:7].sum(axis=0), np.full(24, 3.0))


def test_minimal_two_node_matrix():
    s = build_summation_matrix(2, levels=())
    assert np.array_equal(s, np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))


def test_indivisible_plan_rejected():
    with pytest.raises(ConfigError, match="equal groups"):
        build_summation_matrix(10, levels=(3,))


def test_aggregate_matches_manual_sums():
    rng = np.random.default_rng(7)
    h = build_hierarchy(24)
    bottom = rng.normal(size=(5, 24))
    full = h.aggregate(bottom)
    assert full.shape == (5, 31)
    assert np.allclose(full[:, 0], bottom.sum(axis=1), atol=1e-12)
    assert np.allclose(full[:, 1], bottom[:, :12].sum(axis=1), atol=1e-12)
    assert np.allclose(full[:, 3], bottom[:, :6].sum(axis=1), atol=1e-12)
    assert np.allclose(full[:, 7:], bottom, atol=0)


def test_coherence_gap_zero_on_aggregated_values():
    rng = np.random.default_rng(3)
    h = build_hierarchy(8, levels=(2, 4))
    full = h.aggregate(rng.normal(size=(10, 8)) * 50)
    assert h.coherence_gap(full) < 1e-14
    broken = full.copy()
    broken[2, 0] += 1.0
    assert h.coherence_gap(broken) > 0


def test_invariant_validation():
    with pytest.raises(ConfigError, match="identity"):
        Hierarchy(np.array([[1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ConfigError, match="0 or 1"):
        Hierarchy(np.array([[1.0, 2.0], [1.0, 0.0], [0.0, 1.0]]))


def test_names_cover_roles():
    h = build_hierarchy(8, levels=(2,))
    assert h.names[0] == "total"
    assert h.names[1].startswith("agg")
    assert h.names[-1] == "node07"
    assert len(set(h.names)) == h.n_series


def test_matrix_is_frozen():
    h = build_hierarchy(4, levels=(2,))
    with pytest.raises(ValueError):
        h.s_matrix[0, 0] = 5.0
