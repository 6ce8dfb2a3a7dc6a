import csv
import io
import json
import math
import subprocess
import sys

import pytest

from bomber import cli

SMALL = ["--x-max", "1", "--t-max", "1", "--nx", "11", "--nt", "11"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_eval_r1(capsys):
    code, out, _ = run(capsys, "eval", "--u", "0", "--x", "0.5", "--t", "1")
    assert code == 0
    (row,) = rows(out)
    assert row["region"] == "R1" and float(row["K"]) == 0.5


def test_eval_r2(capsys):
    code, out, _ = run(capsys, "eval", "--u", "0", "--x", "1", "--t", "1")
    (row,) = rows(out)
    assert code == 0 and row["region"] == "R2"
    assert float(row["K"]) == pytest.approx(0.846574, abs=1e-6)
    assert float(row["f_u"]) == pytest.approx(math.log(2), rel=1e-15)


def test_eval_outside_exits_2(capsys):
    code, _, err = run(capsys, "eval", "--u", "0.3", "--x", "9", "--t", "9")
    assert code == 2
    assert "no closed form outside R2" in err


def test_eval_numeric_outside(capsys):
    code, out, _ = run(capsys, "eval", "--u", "0.3", "--x", "0.9", "--t", "0.9", "--numeric",
                       "--x-max", "1", "--t-max", "1", "--nx", "41", "--nt", "41", "--format", "json")
    assert code == 0
    rec = json.loads(out)
    assert rec["source"] == "numeric" and 0 < rec["P"] <= 1


@pytest.mark.parametrize("argv", [
    ["eval", "--u", "1.5", "--x", "1", "--t", "1"],
    ["eval", "--x", "1", "--t", "1"],
    ["eval", "--u", "0.3", "--t", "1"],
    ["solve", "--u", "0.3", "--nx", "1"],
    ["simulate", "--u", "0.3", "--x", "1", "--t", "1", "--policy", "bogus"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(capsys, argv):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    capsys.readouterr()
    assert code == 1


def test_solve_csv_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["solve", "--u", "0.3", *SMALL, "--out", str(a)]) == 0
    assert cli.main(["solve", "--u", "0.3", *SMALL, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    data = rows(a.read_text())
    assert list(data[0]) == ["x", "t", "region", "pbar", "p", "kstar"]
    assert len(data) == 121
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".bomber-")]


def test_csv_round_trips_17_digits(tmp_path):
    out = tmp_path / "g.csv"
    cli.main(["solve", "--u", "0.3", *SMALL, "--out", str(out)])
    for row in rows(out.read_text()):
        for key in ("pbar", "p", "kstar"):
            value = float(row[key])
            assert cli.fmt(value) == row[key]
            assert float(cli.fmt(value)) == value


def test_solve_json(capsys):
    code, out, _ = run(capsys, "solve", "--u", "0.3", *SMALL, "--format", "json")
    data = json.loads(out)
    assert code == 0 and len(data["pbar"]) == 11 and data["region"][0][0] == "R1"


def test_boundary_row_u0(capsys):
    code, out, _ = run(capsys, "boundary", "--u", "0", "--t", "1", "--x-max", "2", "--t-max", "2",
                       "--nx", "201", "--nt", "201")
    assert code == 0
    (row,) = rows(out)
    assert list(row) == ["t", "x_detected", "x_analytic", "gap"]
    assert row["x_analytic"] == "0.69314718055994529"
    assert float(row["gap"]) <= 2 * 0.01


def test_boundary_rejects_time_beyond_grid(capsys):
    code, _, _ = run(capsys, "boundary", "--u", "0", "--t", "3", *SMALL)
    assert code == 1


def test_verify_quick_exits_0(capsys, tmp_path):
    out = tmp_path / "report.json"
    code, text, _ = run(capsys, "verify", "--u", "0.5", "--quick", "--out", str(out))
    assert code == 0, text
    assert "all checks passed" in text
    assert json.loads(out.read_text())["passed"] is True


def test_verify_failure_exits_3(capsys, monkeypatch):
    from bomber.verify import VerificationReport

    def failing(*args, **kwargs):
        rep = VerificationReport(0.5)
        rep.add("forced", 1.0, 0.0)
        return rep

    monkeypatch.setattr(cli, "run_verification", failing)
    code, _, _ = run(capsys, "verify", "--u", "0.5", *SMALL)
    assert code == 3


def test_simulate_row(capsys):
    code, out, _ = run(capsys, "simulate", "--u", "0.3", "--x", "0.4", "--t", "2",
                       "--n-runs", "20000", "--seed", "1", "--format", "json")
    assert code == 0
    (rec,) = json.loads(out)
    assert rec["policy"] == "closed-form" and rec["n_runs"] == 20000
    assert abs(rec["p_hat"] - rec["analytic_P"]) <= 4 * rec["stderr"]


def test_simulate_outside_without_grid_exits_2(capsys):
    code, _, _ = run(capsys, "simulate", "--u", "0.3", "--x", "9", "--t", "9", "--n-runs", "10")
    assert code == 2


def test_simulate_fractional_policy(capsys):
    code, out, _ = run(capsys, "simulate", "--u", "0.3", "--x", "1", "--t", "1",
                       "--n-runs", "100", "--policy", "fractional:0.5")
    assert code == 0 and rows(out)[0]["policy"] == "fractional(0.5)"


def test_config_precedence(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"u": 0.0, "x": 0.5, "t": 1.0, "format": "json"}))
    code, out, _ = run(capsys, "eval", "--config", str(conf))
    assert code == 0 and json.loads(out)["u"] == 0.0
    code, out, _ = run(capsys, "eval", "--config", str(conf), "--u", "0.3")
    assert json.loads(out)["u"] == 0.3


def test_config_unknown_key(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"u": 0.0, "colour": "red"}))
    code, _, _ = run(capsys, "eval", "--config", str(conf))
    assert code == 1


def test_failed_run_leaves_no_file(tmp_path, capsys):
    out = tmp_path / "never.csv"
    code, _, _ = run(capsys, "eval", "--u", "0.3", "--x", "9", "--t", "9", "--out", str(out))
    assert code == 2 and not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bomber", "eval", "--u", "0", "--x", "0.5", "--t", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "R1" in proc.stdout
