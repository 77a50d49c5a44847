import json
import os

import numpy as np
import pytest

import vrsgd
from vrsgd.cli import main


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_data_roundtrip_delta(tmp_path, capsys):
    path = str(tmp_path / "x.svm")
    code, out, _ = run_cli(["gen-data", "--n", "200", "--d", "40", "--nnz", "5",
                            "--seed", "1", "--out", path], capsys)
    assert code == 0
    written_delta = float(out.split("delta=")[1])
    ds = vrsgd.load_libsvm(path)
    assert ds.delta == written_delta
    assert ds.n == 200


def test_certify_recipe_json(capsys):
    code, out, _ = run_cli(["certify", "--thm", "1", "--n", "1000",
                            "--cond", "n", "--recipe"], capsys)
    assert code == 0
    cert = json.loads(out)
    assert cert["feasible"] is True
    assert cert["theta"] <= 0.5
    assert cert["theorem"] == "serial"


def test_certify_thm2_explicit_and_strict(capsys):
    code, out, _ = run_cli(["certify", "--thm", "2", "--n", "1000", "--L", "1.0",
                            "--cond", "n", "--m", "200n", "--eta", "0.05",
                            "--tau", "2", "--delta", "0.001"], capsys)
    assert code == 0
    assert json.loads(out)["feasible"] is True
    # infeasible + --strict exits 2
    code, out, _ = run_cli(["certify", "--thm", "2", "--n", "1000", "--L", "1.0",
                            "--cond", "n", "--m", "10", "--eta", "0.3",
                            "--strict"], capsys)
    assert code == 2
    assert json.loads(out)["feasible"] is False


def test_solve_hsag_writes_trace_and_resolved_flags(tmp_path, capsys):
    data = str(tmp_path / "d.svm")
    run_cli(["gen-data", "--n", "60", "--d", "12", "--nnz", "3", "--seed", "2",
             "--out", data], capsys)
    out_csv = str(tmp_path / "trace.csv")
    code, out, err = run_cli(["solve", "--schedule", "hsag", "--S", "0.5",
                              "--m", "2n", "--epochs", "2", "--data", data,
                              "--out", out_csv], capsys)
    assert code == 0, err
    assert os.path.exists(out_csv)
    lines = open(out_csv).read().splitlines()
    assert lines[0].startswith("epoch,wall_seconds")
    assert len(lines) == 3
    resolved = json.load(open(out_csv + ".resolved.json"))
    assert resolved["m"] == "2n"
    assert resolved["resolved_m"] == 120
    assert resolved["schedule"] == "hsag"
    assert "seed" in resolved and "eta" in resolved


def test_async_solve_smoke(tmp_path, capsys):
    out_csv = str(tmp_path / "atrace.csv")
    code, out, err = run_cli(["async-solve", "--n", "50", "--d", "10", "--nnz", "3",
                              "--threads", "2", "--epochs", "2", "--m", "n",
                              "--out", out_csv], capsys)
    assert code == 0, err
    assert os.path.exists(out_csv)
    resolved = json.load(open(out_csv + ".resolved.json"))
    assert "max_staleness" in resolved
    assert resolved["barrier_violations"] == 0


def test_unknown_flag_exits_1(capsys):
    assert main(["solve", "--bogus"]) == 1


def test_unknown_subcommand_exits_1(capsys):
    assert main(["frobnicate"]) == 1


def test_missing_dataset_is_user_error(capsys):
    code, _, err = run_cli(["solve"], capsys)
    assert code == 1
    assert "need --data" in err


def test_divergence_exits_2(tmp_path, capsys):
    code, _, err = run_cli(["solve", "--n", "30", "--d", "8", "--nnz", "2",
                            "--eta", "1e60", "--epochs", "1",
                            "--out", str(tmp_path / "t.csv")], capsys)
    assert code == 2
    assert "diverged" in err


def test_ref_opt_reports_gradient_norm(tmp_path, capsys):
    code, out, _ = run_cli(["ref-opt", "--n", "40", "--d", "8", "--nnz", "3",
                            "--cache-dir", str(tmp_path)], capsys)
    assert code == 0
    body = json.loads(out)
    assert body["grad_norm"] <= 1e-12


def test_speedup_command(tmp_path, capsys):
    out_csv = str(tmp_path / "sp.csv")
    code, out, err = run_cli(["speedup", "--n", "50", "--d", "10", "--nnz", "3",
                              "--threads-grid", "1,2", "--seeds", "0",
                              "--target", "1e-6", "--epochs", "40",
                              "--eta", "0.8", "--m", "n",
                              "--cache-dir", str(tmp_path / "cache"),
                              "--out", out_csv], capsys)
    assert code == 0, err
    lines = open(out_csv).read().splitlines()
    assert lines[0] == "threads,median_seconds,speedup,reached"
    first = lines[1].split(",")
    assert first[0] == "1" and float(first[2]) == 1.0


def test_plan_flag_runs_plan(tmp_path, capsys):
    plan = {
        "dataset": {"synthetic": {"n": 30, "d": 8, "nnz": 3, "seed": 0}},
        "entries": [{"name": "vr", "algo": "svrg", "epochs": 2, "eta": 0.5,
                     "m": "n", "seeds": [0]}],
        "lam": "1/n",
        "output_dir": str(tmp_path / "out"),
    }
    plan_path = tmp_path / "plan.json"
    json.dump(plan, open(plan_path, "w"))
    code, _, err = run_cli(["solve", "--plan", str(plan_path)], capsys)
    assert code == 0, err
    assert (tmp_path / "out" / "trace_vr.csv").exists()
    assert (tmp_path / "out" / "plan_resolved.json").exists()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert main(["solve", "--help"]) == 0
