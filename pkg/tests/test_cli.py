import hashlib
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from wbaryc import io
from wbaryc.cli import main


def digest(path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.iterdir()) if p.is_file()}


def test_gen_is_byte_identical(tmp_path):
    args = ["gen", "--m", "4", "--n", "20", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b")


def test_gen_schema_and_meta(tmp_path):
    out = tmp_path / "d"
    assert main(["gen", "--m", "3", "--n", "5", "--mean-range=-0.5:0.5", "--std-range=1:2", "--out", str(out)]) == 0
    H = io.read_histograms_csv(out / "measures.csv")
    assert H.shape == (3, 5)
    np.testing.assert_allclose(H.sum(axis=1), 1.0, atol=1e-9)
    meta = io.read_json(out / "meta.json")
    assert meta["grid"] == {"lo": -5.0, "hi": 5.0, "n": 5} and meta["seed"] == 0
    assert all(-0.5 <= m <= 0.5 for m in meta["means"])
    assert all(1.0 <= s <= 2.0 for s in meta["stds"])


def test_run_example_and_determinism(tmp_path):
    args = ["run", "--solver", "smd", "--n", "50", "--m", "1000", "--eps", "0.05"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    rows = io.read_trace_csv(tmp_path / "a" / "trace.csv")
    assert len(rows) >= 1000
    a, b = (io.read_json(tmp_path / x / "result.json") for x in "ab")
    a.pop("wall_ms")
    b.pop("wall_ms")
    assert a == b
    assert a["planner"]["pipeline"] == "sa-unregularized-md"
    assert len(a["p"]) == 50 and a["seeds"]["dataset"] == 0
    w = np.array([r.w2_to_truth for r in rows])
    smooth = np.convolve(w, np.ones(50) / 50, mode="valid")
    assert np.all(np.diff(smooth) <= 0)


def test_record_every(tmp_path):
    assert main(["run", "--solver", "psgd", "--n", "30", "--m", "40", "--record-every", "10", "--out", str(tmp_path)]) == 0
    ks = [r.k for r in io.read_trace_csv(tmp_path / "trace.csv")]
    assert ks == [1, 10, 20, 30, 40]


@pytest.mark.parametrize("solver,extra", [("ibp", ["--iters", "20"]), ("penalized-mp", ["--lambda", "0.5", "--iters", "200"])])
def test_saa_solvers_run(tmp_path, solver, extra):
    assert main(["run", "--solver", solver, "--n", "12", "--m", "4", "--out", str(tmp_path)] + extra) == 0
    res = io.read_json(tmp_path / "result.json")
    assert res["solver"] == solver and abs(sum(res["p"]) - 1) <= 1e-9
    assert io.read_trace_csv(tmp_path / "trace.csv")


def test_compare_identical_entries_and_svg(tmp_path):
    assert main(["compare", "--solvers", "smd,smd", "--n", "20", "--m", "30", "--out", str(tmp_path)]) == 0
    rows = io.read_report_csv(tmp_path / "report.csv")
    first = [r[1:] for r in rows[: len(rows) // 2]]
    second = [r[1:] for r in rows[len(rows) // 2 :]]
    assert first == second and len(first) == 30
    ET.parse(tmp_path / "chart.svg")
    summary = io.read_json(tmp_path / "summary.json")
    assert [s["solver"] for s in summary["solvers"]] == ["smd", "smd"]
    assert summary["solvers"][0]["final_w2"] == summary["solvers"][1]["final_w2"]


def test_compare_thread_cap(tmp_path, monkeypatch):
    args = ["compare", "--solvers", "smd,psgd", "--n", "15", "--m", "10"]
    assert main(args + ["--out", str(tmp_path / "one")]) == 0
    monkeypatch.setenv("WBARYC_THREADS", "2")
    assert main(args + ["--out", str(tmp_path / "two")]) == 0
    assert (tmp_path / "one" / "report.csv").read_bytes() == (tmp_path / "two" / "report.csv").read_bytes()
    monkeypatch.setenv("WBARYC_THREADS", "many")
    assert main(args + ["--out", str(tmp_path / "bad")]) == 2


def test_inputs_not_mutated_and_eval(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen", "--m", "6", "--n", "25", "--out", str(data)]) == 0
    before = digest(data)
    assert main(["run", "--data", str(data), "--solver", "smd", "--out", str(tmp_path / "run")]) == 0
    assert main(["compare", "--data", str(data), "--solvers", "smd,ibp", "--iters", "5", "--out", str(tmp_path / "cmp")]) == 0
    capsys.readouterr()
    result = tmp_path / "run" / "result.json"
    res_before = result.read_bytes()
    assert main(["eval", "--data", str(data), "--result", str(result)]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["w2_to_truth"] == pytest.approx(io.read_json(result)["w2_to_truth"], abs=1e-12)
    assert ev["objective"] >= 0 and ev["objective_at_truth"] >= 0
    assert digest(data) == before and result.read_bytes() == res_before
    assert main(["eval", "--data", str(data), "--n", "30", "--result", str(result)]) == 2


def test_plan_json(capsys):
    assert main(["plan", "--n", "10", "--eps", "0.1", "--c-inf", "1", "--gamma", "0.1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["plans"]["saa_entropic"]["m"] == pytest.approx(20000, rel=1e-12)
    assert out["plans"]["sa_unregularized_sgd"]["gamma"] == pytest.approx(0.1 / (4 * np.log(10)), rel=1e-12)
    assert len(out["complexity"]) == 6


def test_usage_errors(tmp_path, capsys):
    assert main(["run", "--solver", "newton"]) == 2
    assert main(["run", "--m", "0"]) == 2
    assert main(["plan", "--n", "10"]) == 2
    assert main(["gen", "--m", "2"]) == 2
    assert main(["run", "--grid", "1:0:5"]) == 2
    capsys.readouterr()
    assert main(["run", "--solver", "penalized-mp", "--n", "5", "--m", "2"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ValueError" and err["command"] == "run"


def test_solver_failure_writes_error_json(tmp_path, capsys):
    out = tmp_path / "fail"
    code = main(["run", "--solver", "ibp", "--n", "20", "--m", "3", "--gamma", "0.5",
                 "--eps-prime", "1e-14", "--iters", "3", "--out", str(out)])
    assert code == 3
    err = io.read_json(out / "error.json")
    assert err["error"] == "NonConvergence" and err["solver"] == "ibp"
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1]) == err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wbaryc", "plan", "--n", "5", "--eps", "0.2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "saa_penalized" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "wbaryc", "bogus"], capture_output=True, text=True, check=False)
    assert proc.returncode == 2
