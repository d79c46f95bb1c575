import csv
import json

import pytest

from twowayrelay.cli import main
from twowayrelay.harness import (
    ConfigValidationError,
    ExperimentConfig,
    load_config_file,
    preset,
    preset_names,
    run,
    validate,
)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate(name):
    validate(preset(name))


def test_unknown_preset():
    with pytest.raises(ConfigValidationError):
        preset("fig99")


def test_region_outputs(tmp_path):
    m = run(preset("fig3b").replace(out=str(tmp_path), boundary_points=9))
    assert set(m.outputs) == {"region_vertices.csv", "region_boundary.csv"}
    boundary = rows(tmp_path / "region_boundary.csv")
    assert len(boundary) == 4 * 9
    vertices = rows(tmp_path / "region_vertices.csv")
    assert {r["protocol"] for r in vertices} == {"tdmh", "mlnc", "plnc", "hull"}
    assert sum(r["protocol"] == "tdmh" for r in vertices) == 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["kind"] == "region"
    assert manifest["code_version"]


@pytest.mark.parametrize(
    "config",
    [
        ExperimentConfig("gain", trials=50, points=11),
        ExperimentConfig("schedule", protocol="oplnc", caps=(4, 2, 3, 6), rate_a=0.3, rate_b=0.9, max_events=5000),
        ExperimentConfig("dmt", protocol="mlnc", coop="select-relay", num_relays=2, trials=20_000),
    ],
    ids=["gain", "schedule", "dmt"],
)
def test_reruns_are_byte_identical(tmp_path, config):
    first = run(config.replace(out=str(tmp_path / "a")))
    second = run(config.replace(out=str(tmp_path / "b")))
    assert first.outputs == second.outputs
    for name in first.outputs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_validation_lists_every_bad_field():
    bad = ExperimentConfig("dmt", protocol="tdmh", m=-1.0, trials=0, snr_db_grid=(30.0, 20.0))
    with pytest.raises(ConfigValidationError) as info:
        validate(bad)
    assert {"m", "trials", "snr_db_grid"} <= set(info.value.errors)


def test_schedule_needs_caps():
    with pytest.raises(ConfigValidationError) as info:
        validate(ExperimentConfig("schedule", protocol="omlnc", rate_a=0.1, rate_b=0.1))
    assert "caps" in info.value.errors


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("kind = dmt  # comment\nprotocol = plnc\ncoop = select-bc\nsnr_db_grid = 10, 20, 30\ntrials = 500\n")
    config = load_config_file(path)
    assert config.kind == "dmt" and config.protocol == "plnc"
    assert config.snr_db_grid == (10.0, 20.0, 30.0) and config.trials == 500
    path.write_text("kind = dmt\nnonsense\n")
    with pytest.raises(ConfigValidationError):
        load_config_file(path)


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["region", "--caps", "1,1,1,1", "--out", out]) == 0
    assert main(["preset-list"]) == 0
    assert main(["region", "--caps", "1,1,1", "--out", out]) == 2
    assert main(["region", "--caps", "1,-1,1,1", "--out", out]) == 2
    assert main(["dmt", "--m", "0.25", "--trials", "0", "--out", out]) == 2
    assert main(["bogus"]) == 2
    rates_outside = ["schedule", "--protocol", "oplnc", "--caps", "1,1,1,1", "--rate-a", "5", "--rate-b", "5"]
    assert main(rates_outside + ["--out", out]) == 3
    capsys.readouterr()


def test_cli_dmt_reports_slope(tmp_path, capsys):
    code = main(["dmt", "--protocol", "tdmh", "--relays", "2", "--trials", "100000", "--seed", "1", "--out", str(tmp_path)])
    assert code == 0
    captured = capsys.readouterr()
    line = next(s for s in captured.out.splitlines() if s.startswith("d_hat="))
    d_hat = float(line.split()[0].split("=")[1])
    assert d_hat == pytest.approx(1.0, abs=0.1)
    assert "trials scaled down" in captured.err


@pytest.mark.slow
def test_fig7_mlnc_two_relays_preset(tmp_path):
    m = run(preset("fig7-mlnc-2relays").replace(out=str(tmp_path), trials=300_000))
    assert m.summary["d_hat"] == pytest.approx(m.summary["d_theory"], abs=0.2)
