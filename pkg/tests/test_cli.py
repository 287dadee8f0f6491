"""CLI — 서브커맨드, 덮어쓰기 플래그, 종료 코드."""

from __future__ import annotations

import json

import pytest

from run import main
from tests.test_harness import SMALL, SMALL_BER


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "small.conf"
    path.write_text(SMALL, encoding="utf-8")
    return path


def test_mse_sweep_writes_csv_and_mirror(spec_file, tmp_path):
    out = tmp_path / "res" / "mse.csv"
    assert main(["mse-sweep", "--spec", str(spec_file), "--out", str(out), "--trials", "1"]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "receiver,axis,user,metric,value,bound,trials,seed"
    assert all(line.split(",")[6] == "1" for line in lines[1:])
    assert out.with_suffix(".json").exists()


def test_seed_override_changes_seed_column(spec_file, tmp_path):
    out = tmp_path / "mse.csv"
    assert main(["mse-sweep", "--spec", str(spec_file), "--out", str(out), "--seed", "5"]) == 0
    assert all(line.endswith(",5") for line in out.read_text(encoding="utf-8").splitlines()[1:])


def test_ber_sweep(tmp_path):
    spec = tmp_path / "ber.conf"
    spec.write_text(SMALL_BER, encoding="utf-8")
    out = tmp_path / "ber.csv"
    assert main(["ber-sweep", "--spec", str(spec), "--out", str(out), "--threads", "2"]) == 0
    assert "single_user" in out.read_text(encoding="utf-8")


def test_bounds_prints_json(spec_file, capsys):
    assert main(["bounds", "--spec", str(spec_file)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["var_a_bound"] == [0.0625, 0.0625]
    assert report["tau_divergent"] == [True, True]


def test_demo_prints_table(spec_file, capsys):
    assert main(["demo", "--spec", str(spec_file), "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "user" in out
    assert len(out.strip().splitlines()) == 2 + 2


def test_spec_errors_exit_with_code_two(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text(SMALL + "foo = 1\n", encoding="utf-8")
    assert main(["mse-sweep", "--spec", str(bad)]) == 2
    assert "foo" in capsys.readouterr().err


def test_axis_mismatch_exits_with_code_two(spec_file):
    assert main(["ber-sweep", "--spec", str(spec_file)]) == 2


def test_invalid_flag_value():
    with pytest.raises(SystemExit):
        main(["mse-sweep", "--spec", "x.conf", "--trials", "0"])
