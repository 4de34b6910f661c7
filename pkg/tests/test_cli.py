import csv
import json
import subprocess
import sys

import pytest

from qsclab.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISMATCH, EXIT_OK, main

WITNESS = {
    "task": "verify-ricci",
    "seed": 7,
    "sample_count": 3,
    "space": {
        "base": {"kind": "interval", "signature": -1, "coords": ["t"]},
        "fibers": [{"kind": "circle"}],
        "warpings": ["exp(t)"],
    },
    "qsc": {"lambda1": 1, "lambda2": 1, "P": {"where": "base", "components": ["1"]}},
}

TWISTED = {
    "task": "verify-ricci",
    "seed": 3,
    "sample_count": 2,
    "space": {
        "base": {"kind": "interval", "signature": -1, "coords": ["t"]},
        "fibers": [{"kind": "torus", "dim": 2, "coords": ["x", "y"]}],
        "warpings": ["exp(t)*(2 + sin(x))"],
    },
    "qsc": {"lambda1": 1, "lambda2": 2, "P": {"where": "base", "components": ["1"]}},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(tmp_path, *args, out="out"):
    outdir = tmp_path / out
    code = main([*args, "--out", str(outdir)])
    return code, outdir


# ---------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------


def test_verify_witness_matches(tmp_path):
    code, out = run(tmp_path, "verify", "--config", write_config(tmp_path, WITNESS))
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["mismatched"] == 0
    assert report["summary"]["ricci_max_abs"] < 1e-12
    rows = read_csv(out / "ledger.csv")
    assert rows and {r["verdict"] for r in rows} == {"MATCH"}
    assert {r["seed"] for r in rows} == {"7"}


def test_verify_curvature_twisted_matches(tmp_path):
    cfg = dict(TWISTED, task="verify-curvature")
    code, out = run(tmp_path, "verify", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_OK
    kinds = {r["kind"] for r in read_csv(out / "ledger.csv")}
    assert kinds == {"connection", "curvature"}


def test_verify_bare_reading_reports_mismatch(tmp_path):
    cfg = dict(TWISTED, fiber_reading="bare")
    code, out = run(tmp_path, "verify", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_MISMATCH
    bad = [r for r in read_csv(out / "ledger.csv") if r["verdict"] == "MISMATCH"]
    assert bad and all(r["fingerprint"] for r in bad)


def test_verify_scalar_reports_values(tmp_path):
    cfg = dict(WITNESS, task="verify-scalar")
    code, out = run(tmp_path, "verify", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert len(report["summary"]["scalar_values"]) == 3


def test_verify_explicit_points(tmp_path):
    cfg = dict(WITNESS, points=[[0.1, 0.2], [0.5, 1.0]])
    del cfg["sample_count"]
    code, out = run(tmp_path, "verify", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_OK
    points = {r["point"] for r in read_csv(out / "ledger.csv")}
    assert len(points) == 2


def test_verify_is_byte_identical_across_runs(tmp_path):
    path = write_config(tmp_path, TWISTED)
    _, a = run(tmp_path, "verify", "--config", path, out="a")
    _, b = run(tmp_path, "verify", "--config", path, out="b")
    assert (a / "ledger.csv").read_bytes() == (b / "ledger.csv").read_bytes()
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    for r in (ra, rb):
        r["metadata"].pop("timestamp")
    assert ra == rb


def test_seed_flag_changes_points(tmp_path):
    path = write_config(tmp_path, WITNESS)
    _, a = run(tmp_path, "verify", "--config", path, "--seed", "1", out="a")
    _, b = run(tmp_path, "verify", "--config", path, "--seed", "2", out="b")
    assert (a / "ledger.csv").read_bytes() != (b / "ledger.csv").read_bytes()


def test_strict_rejects_zero_lambda1(tmp_path, capsys):
    cfg = json.loads(json.dumps(WITNESS))
    cfg["qsc"]["lambda1"] = 0
    code, _ = run(tmp_path, "verify", "--strict", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_CONFIG
    assert "lambda1" in capsys.readouterr().err


def test_strict_rejects_unknown_keys(tmp_path):
    cfg = dict(WITNESS, colour="blue")
    path = write_config(tmp_path, cfg)
    assert run(tmp_path, "verify", "--strict", "--config", path)[0] == EXIT_CONFIG
    assert run(tmp_path, "verify", "--config", path, out="lax")[0] == EXIT_OK


def test_malformed_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"task": ')
    assert run(tmp_path, "verify", "--config", str(path))[0] == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error:")


def test_missing_config_file(tmp_path):
    assert run(tmp_path, "verify", "--config", str(tmp_path / "none.json"))[0] == EXIT_CONFIG


def test_verify_rejects_solver_task(tmp_path):
    cfg = dict(WITNESS, task="solve-grw-einstein")
    assert run(tmp_path, "verify", "--config", write_config(tmp_path, cfg))[0] == EXIT_CONFIG


# ---------------------------------------------------------------------
# solve and classify
# ---------------------------------------------------------------------


def test_solve_grw_einstein(tmp_path, capsys):
    code, out = run(
        tmp_path, "solve", "--task", "solve-grw-einstein", "--l", "1", "--lambda1", "1", "--lambda2", "2", "--alpha", "0"
    )
    assert code == EXIT_OK
    assert "(c1 + c2*t)*exp(t)" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["exit_code"] == EXIT_OK
    assert report["summary"]["worst_residual"] < 1e-9
    ledger = read_csv(out / "ledger.csv")
    assert {"T3.14(2)", "C3.15(2)"} <= {r["case_id"] for r in ledger}
    samples = read_csv(out / "samples.csv")
    assert samples and set(samples[0]) == {"case_id", "t", "value", "residual"}


def test_solve_grw_scalar(tmp_path):
    code, out = run(
        tmp_path, "solve", "--task", "solve-grw-scalar", "--l", "3", "--lambda1", "1", "--lambda2", "1",
        "--sbar", "-6", "--sf", "0",
    )
    assert code == EXIT_OK
    cases = {r["case_id"] for r in read_csv(out / "ledger.csv")}
    assert any(c.startswith("T3.19") for c in cases)


def test_classify_typeIII(tmp_path, capsys):
    code, out = run(tmp_path, "classify", "--type", "III", "--lambda1", "1", "--lambda2", "1")
    assert code == EXIT_OK
    assert "T4.20(3)" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["task"] == "classify-kasner"


def test_classify_typeII(tmp_path):
    code, out = run(tmp_path, "classify", "--type", "II", "--lambda1", "1", "--lambda2", "1")
    assert code == EXIT_OK
    cases = {r["case_id"] for r in read_csv(out / "ledger.csv")}
    assert "T4.19(6)" in cases


def test_classify_nothing_applies(tmp_path, capsys):
    code, _ = run(tmp_path, "classify", "--type", "III", "--lambda1", "1", "--lambda2", "3")
    assert code == EXIT_INFEASIBLE
    assert "no case applies" in capsys.readouterr().err


def test_classify_zero_lambda1(tmp_path):
    code, _ = run(tmp_path, "classify", "--type", "II", "--lambda1", "0", "--lambda2", "1")
    assert code == EXIT_CONFIG


def test_kasner_scalar(tmp_path):
    code, out = run(
        tmp_path, "classify", "--task", "kasner-scalar", "--type", "III", "--lambda1", "1", "--lambda2", "1",
        "--sbar", "-3", "--p", "1,1,1",
    )
    assert code == EXIT_OK
    assert {r["case_id"] for r in read_csv(out / "ledger.csv")} == {"T4.21(3)(a)"}


def test_kasner_scalar_infeasible(tmp_path):
    code, _ = run(
        tmp_path, "classify", "--task", "kasner-scalar", "--type", "III", "--lambda1", "1", "--lambda2", "-1",
        "--sbar", "24", "--p", "0,0,0",
    )
    assert code == EXIT_INFEASIBLE


def test_solve_is_byte_identical(tmp_path):
    args = ["solve", "--task", "solve-grw-einstein", "--l", "2", "--lambda1", "1", "--lambda2", "1", "--alpha", "0.5"]
    run(tmp_path, *args, out="a")
    run(tmp_path, *args, out="b")
    for name in ("ledger.csv", "samples.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------

TYPE_II_SWEEP = {
    "task": "classify-kasner",
    "params": {"type": "II"},
    "grid": {"lambda1": [-2, -1, 1, 2], "lambda2": [-2, -1, 1, 2]},
}


def test_sweep_rows_and_threads(tmp_path, monkeypatch):
    path = write_config(tmp_path, TYPE_II_SWEEP)
    monkeypatch.setenv("QSC_LAB_THREADS", "1")
    code, a = run(tmp_path, "sweep", "--config", path, out="a")
    monkeypatch.setenv("QSC_LAB_THREADS", "4")
    _, b = run(tmp_path, "sweep", "--config", path, out="b")
    assert code == EXIT_OK
    rows = read_csv(a / "sweep.csv")
    assert len(rows) == 16
    assert [r["index"] for r in rows] == [str(i) for i in range(16)]
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


def test_sweep_alpha_crosses_threshold(tmp_path):
    cfg = {
        "task": "solve-grw-einstein",
        "params": {"l": 1, "lambda1": 1, "lambda2": 1},
        "grid": {"alpha": {"start": 0, "stop": 0.5, "num": 11}},
    }
    code, out = run(tmp_path, "sweep", "--config", write_config(tmp_path, cfg))
    assert code == EXIT_OK
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 11
    at = {float(r["alpha"]): r["cases"] for r in rows}
    assert "T3.14(1)" in at[0.0] and "T3.14(2)" in at[0.25] and "T3.14(3)" in at[0.5]


def test_sweep_row_cap(tmp_path):
    cfg = dict(TYPE_II_SWEEP, max_rows=10)
    assert run(tmp_path, "sweep", "--config", write_config(tmp_path, cfg))[0] == EXIT_CONFIG


def test_sweep_rejects_non_finite(tmp_path):
    cfg = dict(TYPE_II_SWEEP, grid={"lambda1": [1, float("nan")], "lambda2": [1]})
    assert run(tmp_path, "sweep", "--config", write_config(tmp_path, cfg))[0] == EXIT_CONFIG


def test_sweep_error_rows(tmp_path):
    cfg = dict(TYPE_II_SWEEP, grid={"lambda1": [0, 1], "lambda2": [1]})
    code, out = run(tmp_path, "sweep", "--config", write_config(tmp_path, cfg))
    rows = read_csv(out / "sweep.csv")
    assert [r["code"] for r in rows] == ["1", "0"]
    assert code in (EXIT_OK, EXIT_CONFIG)


# ---------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qsclab.cli", "classify", "--type", "III", "--lambda1", "1", "--lambda2", "1",
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == EXIT_OK
    assert "T4.20(3)" in proc.stdout


def test_no_command_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
