import subprocess
import sys

import numpy as np
import pytest

from biso.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from biso.core import read_matrix
from biso.experiment import parse_csv
from biso.sampling import read_observations


def test_simulate_then_estimate(tmp_path, capsys):
    obs, truth, out = tmp_path / "obs.txt", tmp_path / "truth.txt", tmp_path / "m.txt"
    assert main(["simulate", "--dims", "12x10", "--seed", "3", "--out", str(obs), "--truth-out", str(truth)]) == EXIT_OK
    sample = read_observations(obs)
    assert (sample.n1, sample.n2, sample.N) == (12, 10, 120.0)
    assert sample.is_binary()
    assert read_matrix(truth).shape == (12, 10)
    for name in ("tds", "borda", "project-only"):
        assert main(["estimate", "--obs", str(obs), "--estimator", name, "--out", str(out)]) == EXIT_OK
        M = read_matrix(out)
        assert M.shape == (12, 10) and M.min() >= 0 and M.max() <= 1
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("pi_hat ") and len(lines[0].split()) == 13


def test_estimate_with_second_sample(tmp_path):
    a, b, out = tmp_path / "a.txt", tmp_path / "b.txt", tmp_path / "m.txt"
    main(["simulate", "--dims", "8x8", "--seed", "1", "--out", str(a)])
    main(["simulate", "--dims", "8x8", "--seed", "2", "--out", str(b)])
    assert main(["estimate", "--obs", str(a), "--obs2", str(b), "--estimator", "tds", "--out", str(out),
                 "--threshold-constant", "0.1"]) == EXIT_OK


def test_experiment_and_rates(tmp_path, capsys):
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("dims = 6x6,8x8\ntrials = 2\nestimators = borda\nnoise = gaussian\n")
    out = tmp_path / "res.csv"
    args = ["experiment", "--config", str(cfg), "--dims", "6x6,8x8,10x10", "--estimator", "borda",
            "--estimator", "tds", "--n-rule", "prop:2", "--out", str(out), "--seed", "5"]
    assert main(args) == EXIT_OK
    rows = parse_csv(out.read_text())
    assert len(rows) == 3 * 2 * 2
    assert {r.N for r in rows} == {72.0, 128.0, 200.0}
    first = out.read_text()
    assert main(args + ["--workers", "2"]) == EXIT_OK
    assert out.read_text() == first
    capsys.readouterr()
    assert main(["rates", "--in", str(out)]) == EXIT_OK
    text = capsys.readouterr().out.splitlines()
    assert text[0].startswith("estimator,metric,slope") and len(text) == 3
    rates = tmp_path / "rates.csv"
    assert main(["rates", "--in", str(out), "--metric", "max_row", "--out", str(rates)]) == EXIT_OK
    assert "max_row" in rates.read_text()


def test_conetest_csv(tmp_path):
    out = tmp_path / "cone.csv"
    assert main(["conetest", "--lambdas", "1", "--deltas", "0.25", "--rs", "1", "--ss", "5,10",
                 "--trials", "2000", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and lines[0].endswith("bound,ratio")


@pytest.mark.parametrize(
    "argv",
    [
        ["experiment", "--dims", "4x4", "--trials", "0"],
        ["experiment", "--dims", "4x4", "--n-rule", "bogus"],
        ["experiment", "--config", "/nonexistent.cfg"],
        ["experiment", "--dims", "4x4", "--estimator", "nonsense"],
        ["simulate", "--dims", "4x4,5x5", "--out", "x"],
        ["rates", "--in", "/nonexistent.csv"],
        ["conetest", "--lambdas", "a,b"],
        ["frobnicate"],
        [],
    ],
)
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG


def test_rates_with_too_few_dims_is_config_error(tmp_path):
    out = tmp_path / "r.csv"
    main(["experiment", "--dims", "4x4", "--trials", "1", "--estimator", "borda", "--out", str(out)])
    assert main(["rates", "--in", str(out)]) == EXIT_CONFIG


def test_runtime_failure_exit_3(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("2 2 4.0 3\n1 1 0.5\n")
    assert main(["estimate", "--obs", str(bad), "--estimator", "borda", "--out", str(tmp_path / "m")]) == EXIT_RUNTIME


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "biso.cli", "experiment", "--dims", "0x1"], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "dims" in proc.stderr
