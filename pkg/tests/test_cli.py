"""Command line entry points: exit codes, outputs, input immutability."""

import hashlib
import json

import pytest

from gridcast.bench import save_config
from gridcast.cli import main
from tests.test_bench_runner import tiny_config


def write_config(path, config) -> str:
    save_config(config, path)
    return str(path)


def digest(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    """CSV pair generated through the CLI itself."""
    root = tmp_path_factory.mktemp("cli_synth")
    cfg = write_config(root / "config.json", tiny_config(seed=7))
    assert main(["synth", "--config", cfg, "--out", str(root / "run")]) == 0
    meters = root / "run" / "data" / "meters.csv"
    nwp = root / "run" / "data" / "nwp.csv"
    assert meters.exists() and nwp.exists()
    return meters, nwp


def csv_config(meters, nwp, **overrides):
    return tiny_config(
        data={
            "source": "csv",
            "steps_per_day": 24,
            "meters_csv": str(meters),
            "nwp_csv": str(nwp),
            "min_valid_days": 10,
        },
        **overrides,
    )


def test_ingest_writes_cleaning_report(tmp_path, synth_csv, capsys):
    meters, nwp = synth_csv
    cfg = write_config(
        tmp_path / "c.json", csv_config(meters, nwp, output_dir=str(tmp_path / "out"))
    )
    before = digest(meters), digest(nwp)
    assert main(["ingest", "--config", cfg]) == 0
    assert (digest(meters), digest(nwp)) == before
    report = json.loads((tmp_path / "out" / "cleaning_report.json").read_text())
    assert len(report["kept"]) == 4
    assert "kept 4 meters" in capsys.readouterr().out


def test_ingest_requires_csv_source(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", tiny_config())
    assert main(["ingest", "--config", cfg]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_is_a_config_error(tmp_path, capsys):
    assert main(["synth", "--config", str(tmp_path / "nope.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_config_key_is_a_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"seeed": 1}\n')
    assert main(["all", "--config", str(bad)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_missing_meter_csv_is_a_data_error(tmp_path, capsys):
    cfg = write_config(
        tmp_path / "c.json",
        tiny_config(
            data={
                "source": "csv",
                "steps_per_day": 24,
                "meters_csv": str(tmp_path / "absent.csv"),
            }
        ),
    )
    assert main(["ingest", "--config", cfg]) == 3
    assert "data error" in capsys.readouterr().err


def test_all_then_report_round_trip(tmp_path, synth_csv, capsys):
    meters, nwp = synth_csv
    cfg = write_config(tmp_path / "c.json", csv_config(meters, nwp))
    out = tmp_path / "run"
    before = digest(meters), digest(nwp)
    assert main(["all", "--config", cfg, "--out", str(out)]) == 0
    assert (digest(meters), digest(nwp)) == before
    assert (out / "manifest.json").exists()
    assert (out / "reports" / "summary.json").exists()
    assert "run complete" in capsys.readouterr().out

    # report regenerates figure files from the summary alone
    (out / "figures" / "fig06_profiles.csv").unlink()
    assert main(["report", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "figures" / "fig06_profiles.csv").exists()


def test_seed_override_changes_written_config(tmp_path):
    cfg = write_config(tmp_path / "c.json", tiny_config())
    out = tmp_path / "run"
    assert main(["synth", "--config", cfg, "--seed", "11", "--out", str(out)]) == 0
    # synth writes under out/data; the seed override reaches the generator
    assert (out / "data" / "meters.csv").exists()


def test_report_without_summary_is_a_data_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", tiny_config(output_dir=str(tmp_path)))
    assert main(["report", "--config", cfg]) == 3
    assert "run evaluate first" in capsys.readouterr().err
