"""Synthetic grid generator invariants."""

import numpy as np

from gridcast.ingestion import align_nwp
from gridcast.synthetic import generate_synthetic, write_synthetic_csv


def test_shapes_and_naming():
    ds = generate_synthetic(n_bottom=8, days=21, seed=3, levels=(2, 4))
    assert ds.frame.n_steps == 21 * 144
    assert ds.frame.column_names == [f"node{i:02d}" for i in range(8)]
    assert ds.hierarchy.n_series == 1 + 2 + 4 + 8
    assert ds.nwp.variable_names == ["temp", "ghi"]


def test_deterministic_in_seed():
    a = generate_synthetic(n_bottom=4, days=15, seed=42, levels=(2,))
    b = generate_synthetic(n_bottom=4, days=15, seed=42, levels=(2,))
    c = generate_synthetic(n_bottom=4, days=15, seed=43, levels=(2,))
    assert np.array_equal(a.frame["node00"], b.frame["node00"])
    assert np.array_equal(a.nwp.variables["temp"], b.nwp.variables["temp"])
    assert not np.array_equal(a.frame["node00"], c.frame["node00"])


def test_zero_noise_is_weekly_periodic():
    """Without noise the loads repeat exactly every 7 days."""
    ds = generate_synthetic(n_bottom=3, days=21, seed=0, noise_scale=0.0, levels=(3,))
    week = 7 * 144
    for name in ds.frame.column_names:
        y = ds.frame[name]
        assert np.allclose(y[:week], y[week : 2 * week], atol=1e-10)
        assert np.allclose(y[:week], y[2 * week :], atol=1e-10)


def test_zero_noise_forecasts_are_exact():
    ds = generate_synthetic(n_bottom=2, days=14, seed=0, noise_scale=0.0, levels=(2,))
    aligned = align_nwp(ds.nwp, ds.frame, guard_steps=144)
    # hourly leads sample the truth exactly on the hour
    on_hour = np.arange(0, ds.frame.n_steps, 6)
    assert np.allclose(aligned["temp"][on_hour], ds.truth["temp"][on_hour], atol=1e-9)


def test_loads_positive_and_plausible():
    ds = generate_synthetic(n_bottom=24, days=30, seed=7)
    mat = ds.frame.matrix(ds.frame.column_names)
    assert mat.min() > 0
    means = mat.mean(axis=0)
    assert 50 < means.mean() < 110
    assert np.allclose(means, ds.truth["node_means"], atol=6.0)


def test_temperature_couples_into_load():
    """Colder weather must raise consumption (heating-dominated grid)."""
    ds = generate_synthetic(n_bottom=6, days=30, seed=5, levels=(2,))
    total = ds.frame.matrix(ds.frame.column_names).sum(axis=1)
    r = np.corrcoef(ds.truth["temp"], total)[0, 1]
    assert r < -0.5


def test_starts_monday_midnight():
    ds = generate_synthetic(n_bottom=2, days=10, seed=0, levels=(2,))
    assert ds.frame.day_of_week()[0] == 0
    assert ds.frame.step_of_day()[0] == 0


def test_nwp_covers_span_with_day_guard():
    ds = generate_synthetic(n_bottom=2, days=10, seed=1, levels=(2,))
    aligned = align_nwp(ds.nwp, ds.frame, guard_steps=144)
    assert aligned["ghi"].min() >= 0.0
    assert np.isfinite(aligned["temp"]).all()


def test_csv_export_round_trip(tmp_path):
    from gridcast.ingestion import load_meter_csv, load_nwp_csv

    ds = generate_synthetic(n_bottom=3, days=10, seed=2, levels=(3,))
    paths = write_synthetic_csv(ds, tmp_path)
    meters = load_meter_csv(paths["meters"])
    assert meters.meter_names == ["node00", "node01", "node02"]
    assert np.allclose(meters.columns["node01"], ds.frame["node01"])
    nwp = load_nwp_csv(paths["nwp"])
    assert np.allclose(nwp.variables["temp"], ds.nwp.variables["temp"])
