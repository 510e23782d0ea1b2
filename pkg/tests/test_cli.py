import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from urysohn import SignalSeries, UrysohnModel, eval_quantized
from urysohn.cli import main
from urysohn.io import load_checkpoint, read_pairs, read_signal, save_model, write_pairs


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def sim(tmp_path, capsys):
    for seed, name in ((7, "ident"), (8, "valid")):
        code, _, _ = run(capsys, "simulate", "--control", "discrete", "--seed", seed,
                         "--tmax", 3000, "--out", tmp_path, "--prefix", name)
        assert code == 0
    return tmp_path


def test_simulate_zero(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--control", "zero", "--tmax", 10, "--out", tmp_path)
    assert code == 0
    assert not read_signal(tmp_path / "sim_output.csv").values.any()


def test_simulate_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "simulate", "--seed", 7, "--tmax", 200, "--out", tmp_path / d)
    for f in ("sim_control.csv", "sim_output.csv", "sim_coarse.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_simulate_walk_bounded(tmp_path, capsys):
    run(capsys, "simulate", "--control", "walk", "--G", 0.05, "--tmax", 500, "--out", tmp_path)
    x = read_signal(tmp_path / "sim_control.csv").values
    assert x.min() >= 0 and x.max() <= 1


def test_identify_validate_predict(sim, capsys):
    model = sim / "model.json"
    code, out, _ = run(capsys, "identify", "--pairs", sim / "ident_coarse.csv",
                       "--m", 8, "--n", 11, "--model-out", model)
    assert code == 0
    assert json.loads(out)["untouched_columns"] == []
    M, counters = load_checkpoint(model)
    assert (counters.sum(axis=0) > 0).all()
    with open(sim / "model_residuals.csv") as fh:
        assert next(csv.reader(fh)) == ["step", "residual"]

    code, out, _ = run(capsys, "validate", "--model", model, "--input", sim / "valid_coarse.csv")
    rep = json.loads(out)
    assert code == 0 and rep["error"] < 0.02 and rep["invalid"] == 0

    code, out, _ = run(capsys, "predict", "--model", model, "--input", sim / "valid_coarse.csv",
                       "--out", sim / "pred.csv")
    assert code == 0
    pred = read_signal(sim / "pred.csv")
    assert len(pred) == len(read_pairs(sim / "valid_coarse.csv")[0])


def test_validate_reference_equals_prediction(tmp_path, capsys):
    M = UrysohnModel(np.random.default_rng(0).normal(size=(3, 5)))
    save_model(M, tmp_path / "m.json")
    x = np.random.default_rng(1).random(40)
    write_pairs(SignalSeries(x), eval_quantized(M, SignalSeries(x)), tmp_path / "p.csv")
    code, out, _ = run(capsys, "validate", "--model", tmp_path / "m.json",
                       "--input", tmp_path / "p.csv", "--metric", "l2")
    assert code == 0 and json.loads(out)["error"] == 0.0


def test_validate_invalid_count(tmp_path, capsys):
    m, n = 3, 5
    counters = np.ones((m, n), int)
    counters[:, -1] = 0
    save_model(UrysohnModel(np.ones((m, n))), tmp_path / "m.json", counters)
    x = np.full(20, 0.25)
    x[10] = 1.0
    write_pairs(SignalSeries(x), SignalSeries(np.zeros(20)), tmp_path / "p.csv")
    _, out, _ = run(capsys, "validate", "--model", tmp_path / "m.json", "--input", tmp_path / "p.csv")
    assert json.loads(out)["invalid"] == m


def test_alpha_zero_rejected(sim, capsys):
    code, _, err = run(capsys, "identify", "--pairs", sim / "ident_coarse.csv", "--alpha", 0)
    assert code == 2 and "alpha" in err


def test_parse_error_exit(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("t,x,y\n0,1,2\n1,oops,3\n")
    code, _, err = run(capsys, "identify", "--pairs", tmp_path / "bad.csv",
                       "--model-out", tmp_path / "m.json")
    assert code == 3 and "line 3" in err


def test_malformed_model_exit(tmp_path, capsys):
    (tmp_path / "m.json").write_text('{"m": 1, "n": 2, "x_min": 1, "x_max": 0, "matrix": [0, 0]}')
    (tmp_path / "p.csv").write_text("t,x,y\n0,0,0\n1,0,0\n")
    code, _, err = run(capsys, "validate", "--model", tmp_path / "m.json", "--input", tmp_path / "p.csv")
    assert code == 3 and "x_min" in err


def test_numeric_exit(tmp_path, capsys):
    # omega*dt = 6 makes the integrator blow up
    code, _, err = run(capsys, "simulate", "--control", "discrete", "--tmax", 100, "--omega", 40,
                       "--zeta", 0, "--dt", 0.15, "--delta-tau", 0.3, "--out", tmp_path)
    assert code == 4 and "step" in err


def test_stream_identify(sim, tmp_path, capsys, monkeypatch):
    x, y = read_pairs(sim / "ident_coarse.csv")
    lines = "x,y\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(x.values.tolist(), y.values.tolist()))
    monkeypatch.setattr(sys, "stdin", io.StringIO(lines))
    code, out, _ = run(capsys, "identify", "--stream", "--checkpoint-every", 100,
                       "--model-out", tmp_path / "s.json")
    assert code == 0
    code, _, _ = run(capsys, "identify", "--pairs", sim / "ident_coarse.csv",
                     "--model-out", tmp_path / "b.json")
    a, ca = load_checkpoint(tmp_path / "s.json")
    b, cb = load_checkpoint(tmp_path / "b.json")
    assert a == b and np.array_equal(ca, cb)


def test_stream_parse_error(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO("0.1,0.2\n0.3\n"))
    code, _, err = run(capsys, "identify", "--stream", "--model-out", tmp_path / "s.json")
    assert code == 3 and "line 2" in err


def test_table_one_cell(tmp_path, capsys):
    code, out, _ = run(capsys, "table", "t1", "--cells", "m=8:n=41", "--reps", 1,
                       "--tmax", 1000, "--out", tmp_path)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1
    assert rows[0]["m"] == "8" and rows[0]["n"] == "41"
    assert rows[0]["ci95_percent"] == "" and rows[0]["reference_percent"] == "1.27"
    reps = list(csv.DictReader(open(tmp_path / "table_t1_replications.csv")))
    assert list(reps[0]) == ["scenario", "m", "n", "alpha", "sigma", "replication", "error"]
    assert (tmp_path / "table_t1_manifest.json").exists()


def test_table_rerun_from_manifest(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run(capsys, "table", "t2", "--sigma", 0.05, "--alpha", 0.01, "--reps", 2, "--tmax", 1000,
        "--out", "r")
    first = (tmp_path / "r" / "table_t2_replications.csv").read_bytes()
    (tmp_path / "r" / "table_t2_replications.csv").unlink()
    code, _, _ = run(capsys, "rerun", "r/table_t2_manifest.json")
    assert code == 0
    assert (tmp_path / "r" / "table_t2_replications.csv").read_bytes() == first


def test_analyze_rank(capsys):
    code, out, _ = run(capsys, "analyze", "rank", "--m", 2, "--n", 3)
    assert code == 0 and json.loads(out)["rank"] == 5


def test_analyze_classify(tmp_path, capsys):
    U = np.outer([1.0, 0.5], np.sin(np.linspace(0, 3, 6)))
    save_model(UrysohnModel(U), tmp_path / "m.json")
    _, out, _ = run(capsys, "analyze", "classify", "--model", tmp_path / "m.json")
    assert json.loads(out)["kind"] == "hammerstein"


def test_analyze_describability(capsys):
    _, out, _ = run(capsys, "analyze", "describability", "--plant", "feedback")
    assert json.loads(out)["verdict"] is False
    _, out, _ = run(capsys, "analyze", "describability", "--plant", "fir", "--m", 3, "--n", 4)
    assert json.loads(out)["verdict"] is True


def test_analyze_too_large(capsys):
    code, _, _ = run(capsys, "analyze", "rank", "--m", 8, "--n", 10)
    assert code == 3


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "urysohn", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
