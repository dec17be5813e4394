from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from ulamfloat.cli import EXIT_CONFIG, EXIT_OK, EXIT_TOLERANCE, main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_exit_code_constants():
    assert (EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE) == (0, 1, 2)


def test_asa_prints_gaussian_value():
    out = subprocess.run(
        [sys.executable, "-m", "ulamfloat.cli", "asa", "--family", "quadratic", "--A", "1", "--n", "1"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert out.stdout.strip() == "2.5066283"


def test_converge_gauss1d(tmp_path, capsys):
    assert main(["converge", "--config", "gauss1d.cfg", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "converge_J.csv")
    assert rows[0] == ["delta", "raw", "scaled"]
    assert len(rows) == 8
    summary = json.loads((tmp_path / "converge_J.json").read_text())
    assert set(summary) == {"quantity", "reference", "limit", "rel_gap", "fit"}
    assert summary["rel_gap"] <= 0.03
    assert (tmp_path / "converge.png").stat().st_size > 0


def test_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["converge", "--config", "gauss1d.cfg", "--out", str(out), "--plot", "svg"]) == EXIT_OK
    for name in ("converge_I.csv", "converge_J.csv", "converge_J.json", "converge.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_warm_cache_matches_cold_run(tmp_path):
    cache = tmp_path / "caps.csv"
    args = ["converge", "--family", "pnorm", "--p", "4", "--n", "1", "--delta-start", "0.1"]
    args += ["--delta-ratio", "4", "--delta-count", "4", "--grid-extent", "6", "--grid-step", "0.05"]
    assert main(args + ["--out", str(tmp_path / "cold"), "--cache", str(cache), "--plot", "none"]) in (0, 2)
    assert cache.stat().st_size > 0
    assert main(args + ["--out", str(tmp_path / "warm"), "--cache", str(cache), "--plot", "none"]) in (0, 2)
    cold = (tmp_path / "cold" / "converge_J.csv").read_bytes()
    assert cold == (tmp_path / "warm" / "converge_J.csv").read_bytes()


def test_tolerance_not_met_exits_2(tmp_path):
    code = main(["converge", "--config", "gauss1d.cfg", "--tolerance", "1e-12", "--out", str(tmp_path), "--plot", "none"])
    assert code == EXIT_TOLERANCE


@pytest.mark.parametrize(
    "argv",
    [
        ["nosuch"],
        ["asa", "--bogus-flag"],
        ["asa", "--family", "nosuch"],
        ["converge", "--config", "missing.cfg"],
        ["ulam-eval", "--family", "quadratic", "--A", "1", "--delta", "0.1"],
        [],
    ],
)
def test_usage_and_config_errors_exit_1(argv):
    assert main(argv) == EXIT_CONFIG


def test_eval_commands(capsys):
    assert main(["ulam-eval", "--family", "quadratic", "--A", "1", "--delta", "0.5", "--x", "0"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "0,0,0.2476445437,0"
    assert main(["float-eval", "--family", "quadratic", "--A", "1", "--delta", "0.5", "--x", "0"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "0,0,0.4127409061,0"


def test_sandwich_and_bodies(tmp_path):
    assert main(["sandwich", "--config", "gauss1d.cfg", "--out", str(tmp_path)]) == EXIT_OK
    assert read_csv(tmp_path / "sandwich.csv")[0] == ["x", "psi", "ulam", "floating", "slack"]
    assert (tmp_path / "sandwich.png").exists()
    assert main(["bodies", "--config", "disk.cfg", "--which", "metronoid", "--tolerance", "0.03", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "bodies.csv")
    assert rows[0] == ["delta", "deficit", "scaled"] and len(rows) == 6


def test_cap_ratio(capsys):
    assert main(["cap-ratio", "--m", "2", "--delta", "1e-6"]) == EXIT_OK
    assert "ratio=1.66" in capsys.readouterr().out


def test_float_converge(tmp_path):
    assert main(["float-converge", "--config", "gauss1d.cfg", "--out", str(tmp_path), "--plot", "none"]) == EXIT_OK
    assert json.loads((tmp_path / "float_converge.json").read_text())["rel_gap"] < 0.03


def test_check_quick(capsys):
    assert main(["check", "--suite", "quick"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all("PASS" in line for line in lines)
