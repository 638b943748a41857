"""Meter repair, selection and forecast alignment."""

import numpy as np
import pytest

from gridcast import DataError, TimeSeriesFrame
from gridcast.ingestion import (
    CleaningReport,
    NwpTable,
    RawMeterTable,
    SignCorrection,
    align_nwp,
    apply_sign_corrections,
    detect_sign_flips,
    fill_gaps_pchip,
    ingest_meters,
    load_meter_csv,
    load_nwp_csv,
    save_meter_csv,
    save_nwp_csv,
    select_meters,
    trim_to_common_span,
)

SPD = 144


def make_raw(n_days=400, **columns):
    n = n_days * SPD
    ts = np.datetime64("2018-01-01", "s") + np.arange(n) * np.timedelta64(600, "s")
    if not columns:
        columns = {"m0": np.full(n, 50.0)}
    return RawMeterTable(ts, {k: np.asarray(v, float) for k, v in columns.items()})


def test_select_drops_long_gap():
    n = 400 * SPD
    good = np.full(n, 50.0)
    bad = np.full(n, 50.0)
    bad[1000:1007] = np.nan  # 7 consecutive missing, above the limit of 6
    ok = np.full(n, 50.0)
    ok[2000:2006] = np.nan  # exactly 6: acceptable
    report = CleaningReport()
    out = select_meters(make_raw(400, a=good, b=bad, c=ok), report=report)
    assert sorted(out.meter_names) == ["a", "c"]
    assert "gap of 7" in report.dropped["b"]
    assert report.longest_gap["c"] == 6


def test_select_drops_short_record():
    n = 400 * SPD
    short = np.full(n, 50.0)
    short[: n - 300 * SPD] = np.nan  # only 300 days of valid data
    report = CleaningReport()
    out = select_meters(make_raw(400, a=np.full(n, 1.0), b=short), report=report)
    assert out.meter_names == ["a"]
    assert "need 365 days" in report.dropped["b"]


def test_edge_gaps_do_not_count_as_gaps():
    n = 400 * SPD
    late = np.full(n, 50.0)
    late[: 20 * SPD] = np.nan  # starts 20 days late: no interior gap
    out = select_meters(make_raw(400, a=late))
    assert out.meter_names == ["a"]


def test_trim_to_common_span():
    n = 400 * SPD
    a = np.full(n, 1.0)
    a[: 10 * SPD] = np.nan
    b = np.full(n, 2.0)
    b[-5 * SPD :] = np.nan
    out = trim_to_common_span(make_raw(400, a=a, b=b))
    assert out.n_steps == n - 15 * SPD
    assert not np.isnan(out.columns["a"][0])
    assert not np.isnan(out.columns["b"][-1])


def test_pchip_fill_preserves_monotone_ramps():
    n = 400 * SPD
    ramp = np.linspace(0.0, 100.0, n)
    hole = ramp.copy()
    hole[5000:5005] = np.nan
    out = fill_gaps_pchip(make_raw(400, a=hole))
    filled = out.columns["a"][5000:5005]
    # monotone interpolation cannot overshoot the bracketing values
    assert np.all(filled >= ramp[4999]) and np.all(filled <= ramp[5005])
    assert np.allclose(filled, ramp[5000:5005], atol=1e-6)


def test_pchip_rejects_edge_nans():
    n = 400 * SPD
    a = np.full(n, 1.0)
    a[0] = np.nan
    with pytest.raises(DataError, match="edge gaps"):
        fill_gaps_pchip(make_raw(400, a=a))


def test_sign_correction_is_an_involution():
    raw = make_raw(2, a=np.full(2 * SPD, 30.0))
    fix = SignCorrection("a", "2018-01-01T06:00:00", "2018-01-01T12:00:00")
    once = apply_sign_corrections(raw, [fix])
    assert once.columns["a"][40] == -30.0
    assert once.columns["a"][0] == 30.0
    twice = apply_sign_corrections(once, [fix])
    assert np.array_equal(twice.columns["a"], raw.columns["a"])


def test_detect_sign_flips_flags_negative_week():
    n = 30 * SPD
    a = np.full(n, 40.0)
    a[7 * SPD : 14 * SPD] = -40.0
    hits = detect_sign_flips(make_raw(30, a=a))
    assert len(hits) == 1
    assert hits[0]["meter"] == "a"
    assert hits[0]["start"].startswith("2018-01-08")
    # the detector reports and never touches the data
    assert a[7 * SPD] == -40.0


def test_ingest_pipeline_end_to_end():
    n = 400 * SPD
    rng = np.random.default_rng(0)
    a = 50 + rng.normal(size=n)
    a[1234:1238] = np.nan
    b = 60 + rng.normal(size=n)
    b[: SPD // 2] = np.nan  # half-day late start forces day trimming
    with pytest.warns(UserWarning, match="day boundaries"):
        frame, report = ingest_meters(make_raw(400, a=a, b=b))
    assert isinstance(frame, TimeSeriesFrame)
    assert frame.n_steps % SPD == 0
    assert int(frame.timestamps[0].astype("int64")) % 86400 == 0
    assert report.filled_steps["a"] == 4
    assert report.span is not None
    d = report.as_dict()
    assert d["kept"] == ["a", "b"]


def test_meter_csv_round_trip(tmp_path):
    raw = make_raw(2, a=np.arange(2 * SPD, dtype=float))
    path = tmp_path / "meters.csv"
    save_meter_csv(raw, path)
    back = load_meter_csv(path)
    assert back.meter_names == ["a"]
    assert np.allclose(back.columns["a"], raw.columns["a"])
    assert np.array_equal(back.timestamps, raw.timestamps)


def make_nwp(start="2017-12-30", n_issues=20, sigma=0.0):
    rng = np.random.default_rng(1)
    issues = np.datetime64(start, "s") + np.arange(n_issues) * np.timedelta64(
        12 * 3600, "s"
    )
    leads = np.arange(0.0, 49.0)
    base = np.add.outer(np.arange(n_issues) * 12.0, leads)  # absolute hour index
    return NwpTable(
        issues,
        leads,
        {"temp": base + sigma * rng.normal(size=base.shape)},
    )


def test_align_picks_freshest_allowed_issuance():
    nwp = make_nwp()
    n = 2 * SPD
    ts = np.datetime64("2018-01-01", "s") + np.arange(n) * np.timedelta64(600, "s")
    frame = TimeSeriesFrame(ts, {"y": np.zeros(n)}, SPD)
    aligned = align_nwp(nwp, frame, guard_steps=SPD)["temp"]
    # value encodes absolute hours since 2017-12-30; alignment must
    # reproduce the target hour exactly (linear grid interpolates exactly)
    hours = (ts.astype("int64") - nwp.issue_times[0].astype("int64")) / 3600.0
    assert np.allclose(aligned, hours, atol=1e-9)


def test_align_respects_guard():
    nwp = make_nwp(sigma=0.0, n_issues=20)
    n = SPD
    ts = np.datetime64("2018-01-01", "s") + np.arange(n) * np.timedelta64(600, "s")
    frame = TimeSeriesFrame(ts, {"y": np.zeros(n)}, SPD)
    # with a 24 h guard, an instant at 2018-01-01 00:00 (48 h after the
    # first issuance) may use issuances up to 2017-12-31 00:00 only
    guard = SPD
    k_allowed = []
    for t in ts.astype("int64"):
        cutoff = t - guard * 600
        k = np.searchsorted(nwp.issue_times.astype("int64"), cutoff, side="right") - 1
        k_allowed.append(k)
    # reconstruct which issuance alignment used from the encoded value
    aligned = align_nwp(nwp, frame, guard_steps=guard)["temp"]
    hours = (ts.astype("int64") - nwp.issue_times[0].astype("int64")) / 3600.0
    assert np.allclose(aligned, hours)  # exact despite the guard
    lead_used = (
        ts.astype("int64")
        - nwp.issue_times.astype("int64")[np.asarray(k_allowed)]
    ) / 3600.0
    assert lead_used.min() >= 24.0  # never fresher than the guard


def test_align_missing_coverage_raises():
    nwp = make_nwp(n_issues=2)  # covers 12 h of issuances only
    n = 4 * SPD
    ts = np.datetime64("2018-01-01", "s") + np.arange(n) * np.timedelta64(600, "s")
    frame = TimeSeriesFrame(ts, {"y": np.zeros(n)}, SPD)
    with pytest.raises(DataError, match="lead coverage"):
        align_nwp(nwp, frame, guard_steps=0)
    late = NwpTable(
        nwp.issue_times + np.timedelta64(10 * 86400, "s"), nwp.lead_hours, nwp.variables
    )
    with pytest.raises(DataError, match="start too late"):
        align_nwp(late, frame, guard_steps=0)


def test_nwp_csv_round_trip(tmp_path):
    nwp = make_nwp(n_issues=4, sigma=1.0)
    path = tmp_path / "nwp.csv"
    save_nwp_csv(nwp, path)
    back = load_nwp_csv(path)
    assert back.variable_names == ["temp"]
    assert np.array_equal(back.issue_times, nwp.issue_times)
    assert np.array_equal(back.lead_hours, nwp.lead_hours)
    assert np.allclose(back.variables["temp"], nwp.variables["temp"])
