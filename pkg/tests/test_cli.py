import csv
import subprocess
import sys

import numpy as np
import pytest

from monoctrl.cli import EXIT_NONCONVERGENCE, EXIT_OK, EXIT_PRECONDITION, main
from monoctrl.grid import read_field_csv

SMALL = """
[grid]
n = 32
m = 32
[lab]
samples = 10
grids = 32,64
[output]
plots = false
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_rest_gives_zero_fields(cfg, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    _, _, v = read_field_csv(out / "v.csv")
    assert np.all(v == 0.0)
    for name in ("w.csv", "report.txt", "meta.txt"):
        assert (out / name).exists()


def test_bad_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[carleman]\ntau = 0.5\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_PRECONDITION
    assert "tau" in capsys.readouterr().err
    unknown = tmp_path / "unknown.ini"
    unknown.write_text("[grid]\nq = 1\n")
    assert main(["simulate", "--config", str(unknown)]) == EXIT_PRECONDITION


def test_precondition_failure_exits_2(cfg, tmp_path):
    out = tmp_path / "pre"
    assert main(["control-linear", "--config", cfg, "--out", str(out), "--eps-pen", "-1"]) \
        == EXIT_PRECONDITION
    assert (out / "report.txt").read_text().startswith("PRECONDITION FAILURE")


def test_control_linear_ladder(cfg, tmp_path):
    out = tmp_path / "lad"
    assert main(["control-linear", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "ladder.csv")
    assert [float(r["eps_pen"]) for r in rows] == [1e-4, 1e-6, 1e-8]
    term = [np.hypot(float(r["q_T"]), float(r["theta_T"])) for r in rows]
    assert all(b <= a for a, b in zip(term, term[1:]))
    assert (out / "control.csv").exists()


def test_control_nonlinear_exit_codes(cfg, tmp_path):
    assert main(["control-nonlinear", "--config", cfg, "--out", str(tmp_path / "a"),
                 "--delta", "0.01"]) == EXIT_OK
    out = tmp_path / "b"
    assert main(["control-nonlinear", "--config", cfg, "--out", str(out),
                 "--delta", "10"]) == EXIT_NONCONVERGENCE
    assert (out / "report.txt").read_text().startswith("NOT CONVERGED")


def test_basin_sweep_csv(cfg, tmp_path):
    out = tmp_path / "basin"
    main(["control-nonlinear", "--config", cfg, "--out", str(out), "--sweep", "0.01,10",
          "--threads", "2"])
    rows = _rows(out / "basin.csv")
    assert [r["converged"] for r in rows] == ["True", "False"]


def test_carleman_and_weights(cfg, tmp_path):
    out = tmp_path / "car"
    assert main(["carleman-check", "--config", cfg, "--out", str(out), "--which", "coupled"]) == EXIT_OK
    rows = _rows(out / "ratios.csv")
    assert len(rows) == 20 and all(np.isfinite(float(r["ratio"])) for r in rows)
    assert "stability_factor" in (out / "summary.txt").read_text()
    out = tmp_path / "w"
    assert main(["weights-dump", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert (out / "weights.csv").stat().st_size > 0


def test_sweep_runs_each_value(cfg, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--param", "control.eps_pen",
                 "--values", "1e-4,1e-6", "--command", "control-linear",
                 "--args", "--ladder 1e-4"]) == EXIT_OK
    rows = _rows(out / "sweep.csv")
    assert [r["exit_code"] for r in rows] == ["0", "0"]
    assert (out / "run_001" / "ladder.csv").exists()


def _csvs(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*.csv"))}


def test_determinism_and_replay(cfg, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    argv = ["carleman-check", "--config", cfg, "--which", "ode", "--seed", "7"]
    assert main(argv + ["--out", str(a)]) == EXIT_OK
    assert main(argv + ["--out", str(b)]) == EXIT_OK
    assert _csvs(a) == _csvs(b)
    assert main(["replay", str(a / "meta.txt"), "--out", str(c)]) == EXIT_OK
    assert _csvs(a) == _csvs(c)


def test_plots(cfg, tmp_path, capsys):
    out = tmp_path / "p"
    main(["control-linear", "--config", cfg, "--out", str(out), "--ladder", "1e-4,1e-6"])
    assert main(["plot", str(out)]) == EXIT_OK
    first = (out / "ladder.svg").read_bytes()
    assert first.startswith(b"<svg")
    assert "skipped: v.csv not found" in capsys.readouterr().err
    main(["plot", str(out)])
    assert (out / "ladder.svg").read_bytes() == first
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["plot", str(empty)]) == EXIT_OK
    assert "nothing plotted" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "monoctrl.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "carleman-check" in r.stdout
