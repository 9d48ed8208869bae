import json
import math
import subprocess
import sys

import pytest

from rbell.cli import main

QUARTET_FLAGS = ["--a", "pi/2", "--a2", "0", "--b=-pi/4", "--b2", "pi/4"]


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


CONFIG_TEXT = """
[geometry]
separation = 4.0
signal_speed = 1.0
t0 = -6.0

[model]
name = hardy-singlet

[station1]
labels = a=pi/2, a2=0
schedule = random_switch
rate = 2.0

[station2]
labels = b=-pi/4, b2=pi/4
schedule = random_switch
rate = 2.0

[run]
n_trials = 20000
spacing = 1.0
start = 0.0
seed = 42
retarded_definition = simple
quartet = a, a2, b, b2
min_count = 100
"""


# ----------------------------------------------------------------------
# analytic
# ----------------------------------------------------------------------


def test_analytic_hardy_same_retarded(capsys):
    code, out, err = run_cli(
        capsys, ["analytic", "hardy", "same_retarded_chsh"] + QUARTET_FLAGS
    )
    assert code == 0
    data = json.loads(out)
    assert data["value"] == pytest.approx(-math.sqrt(2), abs=1e-9)
    assert data["verdict"] == "satisfied"
    assert "value=-1.414214" in err


def test_analytic_quantum_chsh_violates(capsys):
    code, out, err = run_cli(capsys, ["analytic", "quantum", "chsh"] + QUARTET_FLAGS)
    assert code == 3
    data = json.loads(out)
    assert data["value"] == pytest.approx(-2 * math.sqrt(2), abs=1e-9)
    assert data["verdict"] == "violated"
    assert "value=-2.828427" in err


def test_analytic_retarded_chsh_explicit_retarded(capsys):
    code, out, _ = run_cli(
        capsys,
        ["analytic", "hardy", "retarded_chsh"] + QUARTET_FLAGS
        + ["--ar", "pi/2", "--a2r", "pi/2", "--br=-pi/4", "--b2r=-pi/4"],
    )
    assert code == 0
    data = json.loads(out)
    assert data["value"] == pytest.approx(-math.sqrt(2), abs=1e-9)
    assert data["inputs"]["ar"] == "ar"


def test_analytic_retarded_ch_quantum(capsys):
    code, out, _ = run_cli(
        capsys, ["analytic", "quantum", "retarded_ch"] + QUARTET_FLAGS
    )
    assert code == 3
    data = json.loads(out)
    assert data["value"] == pytest.approx(-(1 + math.sqrt(2)) / 2, abs=1e-9)
    assert data["lower"] == -1.0 and data["upper"] == 0.0


def test_analytic_both_equal(capsys):
    code, out, _ = run_cli(
        capsys, ["analytic", "hardy", "both_equal", "--a", "0", "--b", "0"]
    )
    assert code == 0
    data = json.loads(out)
    assert data["value"] == -2.0
    assert data["verdict"] == "satisfied"


def test_analytic_monte_carlo_cross_check(capsys):
    code, out, _ = run_cli(
        capsys,
        ["analytic", "hardy", "same_retarded_chsh"] + QUARTET_FLAGS
        + ["--n", "20000", "--seed", "3"],
    )
    assert code == 0
    data = json.loads(out)
    mc = data["monte_carlo"]
    se = mc["combined_se"]
    assert abs(mc["value"] - data["value"]) <= 5 * se
    assert mc["verdict"] == "satisfied"


def test_analytic_unknown_model(capsys):
    code, _, err = run_cli(capsys, ["analytic", "pr-box", "chsh"] + QUARTET_FLAGS)
    assert code == 1
    assert "unknown model" in err


def test_analytic_missing_angle(capsys):
    code, _, err = run_cli(capsys, ["analytic", "hardy", "chsh", "--a", "0"])
    assert code == 1
    assert "--a2" in err


def test_analytic_bad_angle(capsys):
    code, _, err = run_cli(
        capsys, ["analytic", "hardy", "chsh", "--a", "three", "--a2", "0",
                 "--b", "0", "--b2", "0"]
    )
    assert code == 1


# ----------------------------------------------------------------------
# optimize
# ----------------------------------------------------------------------


def test_optimize_cli_quantum(capsys):
    code, out, err = run_cli(
        capsys, ["optimize", "--model", "quantum", "--ineq", "chsh",
                 "--direction", "min"]
    )
    assert code == 0
    data = json.loads(out)
    assert data["value"] == pytest.approx(-2 * math.sqrt(2), abs=1e-6)
    assert "evaluations" in data


def test_optimize_cli_spec_file(tmp_path, capsys):
    spec_path = tmp_path / "objective.json"
    spec_path.write_text(json.dumps({
        "model": "hardy",
        "inequality": "same_retarded_chsh",
        "free": ["a2", "b2"],
        "fixed": {"a": 0.0, "b": 0.0},
    }))
    code, out, _ = run_cli(capsys, ["optimize", "--spec", str(spec_path)])
    assert code == 0
    data = json.loads(out)
    assert data["value"] == pytest.approx(-2.0, abs=1e-6)


# ----------------------------------------------------------------------
# run + check round trip
# ----------------------------------------------------------------------


def test_run_and_check_roundtrip(tmp_path, capsys):
    config = tmp_path / "scenario.ini"
    config.write_text(CONFIG_TEXT)
    out_dir = tmp_path / "out"
    code, out, _ = run_cli(
        capsys, ["run", "--config", str(config), "--out", str(out_dir)]
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["trials"] == 20000
    table_path = out_dir / "correlations.csv"
    assert table_path.exists()

    chsh_reports = [
        r for r in summary["reports"] if r["name"] == "retarded_chsh"
    ]
    assert chsh_reports
    target = chsh_reports[0]
    ids = target["inputs"]
    code, out, _ = run_cli(
        capsys,
        ["check", "--table", str(table_path), "--ineq", "retarded_chsh",
         "--a", ids["a"], "--a2", ids["a2"], "--b", ids["b"], "--b2", ids["b2"],
         "--ar", ids["ar"], "--a2r", ids["a2r"], "--br", ids["br"],
         "--b2r", ids["b2r"]],
    )
    assert code in (0, 3)
    data = json.loads(out)
    assert data["value"] == target["value"]  # bit-exact via the CSV round trip
    assert data["combined_se"] == target["combined_se"]


def test_run_seed_override_changes_output(tmp_path, capsys):
    config = tmp_path / "scenario.ini"
    config.write_text(CONFIG_TEXT.replace("n_trials = 20000", "n_trials = 500")
                      .replace("min_count = 100", "min_count = 10"))
    code1, out1, _ = run_cli(
        capsys, ["run", "--config", str(config), "--out", str(tmp_path / "o1")]
    )
    code2, out2, _ = run_cli(
        capsys,
        ["run", "--config", str(config), "--seed", "77", "--out", str(tmp_path / "o2")],
    )
    assert (tmp_path / "o1" / "trials.csv").read_text() != (
        tmp_path / "o2" / "trials.csv"
    ).read_text()


def test_run_n_override(tmp_path, capsys):
    config = tmp_path / "scenario.ini"
    config.write_text(CONFIG_TEXT)
    code, out, _ = run_cli(
        capsys,
        ["run", "--config", str(config), "--n", "300", "--min-count", "5",
         "--out", str(tmp_path / "o")],
    )
    summary = json.loads(out)
    assert summary["trials"] == 300


def test_run_bad_config(tmp_path, capsys):
    config = tmp_path / "scenario.ini"
    config.write_text("[geometry]\nseparation = 1.0\n")
    code, _, err = run_cli(
        capsys, ["run", "--config", str(config), "--out", str(tmp_path / "o")]
    )
    assert code == 1


def test_check_empty_table(tmp_path, capsys):
    table = tmp_path / "table.csv"
    table.write_text("a,b,a_r,b_r,E,SE,count,sufficient\n")
    code, _, err = run_cli(
        capsys,
        ["check", "--table", str(table), "--ineq", "retarded_chsh",
         "--a", "a", "--a2", "a2", "--b", "b", "--b2", "b2"],
    )
    assert code == 2
    assert "missing" in err


def test_check_insufficient_cells(tmp_path, capsys):
    rows = ["a,b,a_r,b_r,E,SE,count,sufficient"]
    for x, y in (("a2", "b2"), ("a2", "b"), ("a", "b2"), ("a", "b")):
        rows.append(f"{x},{y},a,b,0.0,0.1,5,0")
    table = tmp_path / "table.csv"
    table.write_text("\n".join(rows) + "\n")
    code, _, err = run_cli(
        capsys,
        ["check", "--table", str(table), "--ineq", "same_retarded_chsh",
         "--a", "a", "--a2", "a2", "--b", "b", "--b2", "b2"],
    )
    assert code == 2
    assert "trials" in err


def test_verify_command(capsys):
    code, out, _ = run_cli(capsys, ["verify"])
    assert code == 0
    assert "11/11 checks passed" in out


# ----------------------------------------------------------------------
# console entry point
# ----------------------------------------------------------------------


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "rbell.cli", "analytic", "hardy",
         "same_retarded_chsh", "--a", "pi/2", "--a2", "0", "--b=-pi/4",
         "--b2", "pi/4"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["value"] == pytest.approx(-math.sqrt(2))
