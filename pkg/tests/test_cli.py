import io
import json
import subprocess
import sys
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from fluidclt import cli
from fluidclt.numerics import TrajectoryTable


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        try:
            code = cli.main(list(argv))
        except SystemExit as exc:
            code = exc.code
    return code, out.getvalue(), err.getvalue()


def test_solve_mindeg_csv():
    code, out, _ = run("solve", "--model", "mindeg", "--q", "4", "--t-end", "0.6931", "--dt", "1e-4")
    assert code == 0
    tab = TrajectoryTable.from_csv(out)
    assert tab.grid[-1] == pytest.approx(0.6931)
    assert tab.z[-1, 1] == pytest.approx(0.125, abs=1e-4)
    assert out.splitlines()[0].startswith("t,z_1,z_2,z_3,z_4,Sigma_11,Sigma_12")


def test_solve_default_t_end_is_ln2():
    code, out, _ = run("solve", "--q", "3", "--dt", "1e-3")
    assert code == 0
    assert TrajectoryTable.from_csv(out).grid[-1] == pytest.approx(np.log(2), abs=1e-15)


def test_solve_delta_stops_at_window():
    code, out, _ = run("solve", "--model", "dproc", "--d", "2", "--delta", "0.1", "--dt", "1e-3")
    assert code == 0
    tab = TrajectoryTable.from_csv(out)
    assert tab.z[-1, 2] >= 0.9 > tab.z[-2, 2]


def test_solve_zero_time():
    code, out, _ = run("solve", "--t-end", "0")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 2
    vals = [float(v) for v in lines[1].split(",")]
    assert vals[:7] == [0, 1, 0, 0, 0, 0, 0] and not any(vals[7:])


def test_solve_json_and_output_file(tmp_path):
    path = tmp_path / "t.json"
    code, out, _ = run("solve", "--q", "2", "--t-end", "0.1", "--dt", "1e-2", "--format", "json", "-o", str(path))
    assert code == 0 and out == ""
    d = json.loads(path.read_text())
    assert d["label"] == "mindeg" and len(d["t"]) == 11


def test_solve_cross_check():
    code, _, err = run("solve", "--q", "4", "--dt", "1e-3", "--cross-check")
    assert code == 0 and "pass" in err


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"q": 2, "t_end": 0.3, "dt": 0.1}))
    code, out, _ = run("solve", "--config", str(cfg))
    assert code == 0 and TrajectoryTable.from_csv(out).q == 2
    code, out, _ = run("solve", "--config", str(cfg), "--q", "3")
    assert TrajectoryTable.from_csv(out).q == 3


def test_usage_errors(tmp_path):
    assert run("solve", "--bogus")[0] == 2
    assert run("frobnicate")[0] == 2
    assert run("solve", "--model", "mindeg", "--delta", "0.1")[0] == 2
    assert run("solve", "--t-end", "-1")[0] == 2
    assert run("ensemble", "--n", "100")[0] == 2
    assert run("ensemble", "--checkpoints", "0.5,0.2")[0] == 2
    assert run("ensemble", "--checkpoints", "a,b")[0] == 2
    assert run("verify", "--only", "nonsense")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"colour": 1}))
    assert run("solve", "--config", str(bad))[0] == 2


def test_runtime_failure_exit_code():
    # the ODE leaves the d-process domain long before t=0.99, so the ensemble cannot be predicted
    code, _, err = run("ensemble", "--model", "dproc", "--n", "100", "--trials", "2",
                       "--checkpoints", "0.99", "--dt", "1e-3")
    assert code == 1 and "leaves the domain" in err


def test_simulate_csv():
    code, out, _ = run("simulate", "--q", "3", "--n", "1000", "--t-end", "0.5", "--points", "5", "--seed", "1")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "m,t,x_1,x_2,x_3" and len(lines) == 7
    assert lines[1] == "0,0,1000,0,0"


def test_simulate_matches_ensemble_trial():
    from fluidclt.ensemble import EnsembleConfig, run_trial

    code, out, _ = run("simulate", "--model", "dproc", "--n", "500", "--checkpoints", "0.2",
                       "--seed", "4", "--trial", "3", "--format", "json")
    got = json.loads(out)["counts"][0]
    rec = run_trial(EnsembleConfig(model="dproc", n=500, trials=5, checkpoints=(0.2,), seed=4,
                                   params={"d": 2, "epsilon": 0.1, "corrected": True}), 3)
    assert got == rec.counts[0].tolist()


def test_simulate_at_H():
    code, out, _ = run("simulate", "--n", "2", "--q", "3", "--stop-at-H", "--checkpoints", "0")
    assert code == 0 and out.splitlines()[-1] == "1,0.5,0,1,0"


def test_ensemble_two_checkpoints_and_determinism():
    args = ("ensemble", "--model", "mindeg", "--q", "4", "--n", "2000", "--trials", "100",
            "--checkpoints", "0.25,0.5", "--seed", "42")
    code, out, _ = run(*args, "--workers", "1")
    assert code in (0, 3)
    d = json.loads(out)
    assert [b["t"] for b in d["checkpoints"]] == [0.25, 0.5]
    assert run(*args, "--workers", "4")[1] == out


def test_ensemble_at_H_block():
    code, out, _ = run("ensemble", "--stop-at-H", "--n", "20000", "--trials", "30", "--seed", "7")
    d = json.loads(out)
    assert d["stopping"]["h_pred"] == pytest.approx(np.log(2))
    assert code in (0, 3)


def test_ensemble_verdict_fail_exit_3():
    code, _, err = run("ensemble", "--model", "gauss", "--scale", "1.5", "--n", "500", "--trials", "2000",
                       "--checkpoints", "1", "--seed", "1")
    assert code == 3 and "verdict: fail" in err


def test_verify_subset():
    code, out, _ = run("verify", "--only", "numerics")
    assert code == 0
    assert "3/3 criteria pass" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fluidclt", "solve", "--t-end", "0"], capture_output=True)
    assert proc.returncode == 0 and proc.stdout.startswith(b"t,z_1")


def test_verify_catches_wrong_sign(monkeypatch):
    from fluidclt import numerics

    monkeypatch.setattr(numerics, "_fundamental_derivative", lambda T, A: T @ A)
    code, out, _ = run("verify", "--only", "1")
    assert code == 3 and "FAIL" in out
