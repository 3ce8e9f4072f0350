import os, sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
import numpy as np
import pytest
from dynamicpruning.cli import main
from dynamicpruning.config import parse_config
from dynamicpruning.driver import read_history
from dynamicpruning.policies import load_static_scores
from dynamicpruning.report import read_table

CONFIG = """
[run]
epochs = 6
prune_period = 2
prune_rate = 0.5
seed = 4
run_id = {run_id}

[policy]
kind = {kind}

[learner]
batch_size = 16
milestones = 4

[data]
source = engineered
n_per_class = 30
classes = 3
dim = 4
seed = 2
"""

def _write(tmp_path, kind="uncertainty_ema", run_id="", extra=""):
    path = tmp_path / f"{kind}{run_id}.ini"
    path.write_text(CONFIG.format(kind=kind, run_id=run_id) + extra)
    return str(path)

def test_run_writes_results(tmp_path):
    out = tmp_path / "out"
    assert main(["-q", "run", "--config", _write(tmp_path, run_id="demo"), "--out", str(out)]) == 0
    for name in ("results.csv", "demo.history", "demo.config", "demo.epochs.csv", "demo.scoreboard.csv", "accuracy.csv", "runtime.csv"):
        assert (out / name).exists(), name
    history, meta = read_history(out / "demo.history")
    assert len(history) == 3 and meta["k"] == len(history[0])
    echoed = parse_config(out / "demo.config")
    assert echoed.run.run_id == "demo" and echoed.data.n_per_class == 30
    assert echoed.run.dataset_ref.startswith("engineered:")
    snapshot = read_table(out / "demo.scoreboard.csv")
    assert list(snapshot[0])[:5] == ["id", "ema", "var", "last_raw", "sel_count"]
    assert len(snapshot) == 72 and {row["variance_rule"] for row in snapshot} == {"literal"}

def test_run_is_byte_identical(tmp_path):
    config = _write(tmp_path, kind="eps_greedy", run_id="same")
    assert main(["-q", "run", "--config", config, "--out", str(tmp_path / "a")]) == 0
    assert main(["-q", "run", "--config", config, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "same.history").read_bytes() == (tmp_path / "b" / "same.history").read_bytes()
    acc_a = read_table(tmp_path / "a" / "results.csv")[0]["final_test_acc"]
    acc_b = read_table(tmp_path / "b" / "results.csv")[0]["final_test_acc"]
    assert acc_a == acc_b

def test_seed_override_changes_run(tmp_path):
    config = _write(tmp_path, kind="random", run_id="r")
    main(["-q", "run", "--config", config, "--out", str(tmp_path / "a")])
    main(["-q", "run", "--config", config, "--out", str(tmp_path / "b"), "--seed", "99"])
    assert (tmp_path / "a" / "r.history").read_bytes() != (tmp_path / "b" / "r.history").read_bytes()

def test_baseline(tmp_path):
    assert main(["-q", "baseline", "--config", _write(tmp_path), "--out", str(tmp_path / "out")]) == 0
    rows = read_table(tmp_path / "out" / "results.csv")
    assert rows[0]["policy"] == "baseline" and rows[0]["prune_rate"] == "0.0"

def test_sweep(tmp_path):
    extra = "\n[sweep]\nprune_rates = 0.3 0.6\npolicies = uncertainty_ema random\nseeds = 0 1\n"
    assert main(["-q", "sweep", "--config", _write(tmp_path, extra=extra), "--out", str(tmp_path / "out")]) == 0
    assert len(read_table(tmp_path / "out" / "results.csv")) == 8
    assert len(read_table(tmp_path / "out" / "accuracy.csv")) == 4

def test_sweep_needs_section(tmp_path, capsys):
    assert main(["sweep", "--config", _write(tmp_path), "--out", str(tmp_path / "out")]) == 2
    assert "sweep" in capsys.readouterr().err

def test_config_error_exit_code(tmp_path, capsys):
    bad = _write(tmp_path, extra="\n[analysis]\nhy = 0.5\n")
    assert main(["run", "--config", bad, "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "analysis.hy" in err and "hi" in err
    assert not (tmp_path / "out").exists()

def test_analyze(tmp_path):
    for seed in ("1", "2"):
        main(["-q", "run", "--config", _write(tmp_path, run_id=f"s{seed}"), "--out", str(tmp_path / "runs"), "--seed", seed])
    histories = [str(tmp_path / "runs" / "s1.history"), str(tmp_path / "runs" / "s2.history")]
    assert main(["-q", "analyze", "--history", *histories, "--out", str(tmp_path / "analysis"), "--hi", "0.8", "--lo", "0.2"]) == 0
    profile = read_table(tmp_path / "analysis" / "s1.profile.csv")
    assert abs(sum(float(row["frac"]) for row in profile) - 1.0) < 1e-12
    assert {row["group"] for row in profile} <= {"always", "sometimes", "never"}
    curve = read_table(tmp_path / "analysis" / "curve.csv")
    assert list(curve[0])[0] == "sorted_position"
    assert float(curve[-1]["cumulative_fraction"]) == pytest.approx(1.0)
    assert len(read_table(tmp_path / "analysis" / "stability.csv")) == 1

@pytest.mark.parametrize("mode", ["original", "static_sometimes", "random_sometimes"])
def test_retrain(tmp_path, mode):
    main(["-q", "run", "--config", _write(tmp_path, run_id="orig"), "--out", str(tmp_path / "runs")])
    code = main(["-q", "retrain", "--history", str(tmp_path / "runs" / "orig.history"), "--mode", mode, "--out", str(tmp_path / "retrain"), "--hi", "1.0"])
    assert code == 0
    history, _ = read_history(tmp_path / "retrain" / f"orig-retrain-{mode}.history")
    if mode == "static_sometimes":
        assert all(np.array_equal(h, history[0]) for h in history)
    if mode == "original":
        assert (tmp_path / "retrain" / "orig-retrain-original.history").read_bytes() == (tmp_path / "runs" / "orig.history").read_bytes()

def test_retrain_needs_saved_run(tmp_path, capsys):
    (tmp_path / "lonely.history").write_text("# n_samples=3 k=1\n0 1\n")
    assert main(["retrain", "--history", str(tmp_path / "lonely.history"), "--mode", "original", "--out", str(tmp_path / "o")]) == 2
    assert "config" in capsys.readouterr().err

@pytest.mark.parametrize("method", ["forget", "el2n"])
def test_score_static(tmp_path, method):
    config = _write(tmp_path, kind="static_topk")
    out = tmp_path / "scores" / f"{method}.csv"
    assert main(["-q", "score-static", "--method", method, "--config", config, "--out", str(out)]) == 0
    ids, scores, meta = load_static_scores(out)
    assert meta["method"] == method and float(meta["offline_seconds"]) > 0
    assert scores.shape[0] == (1 if method == "forget" else 5)
    assert scores.shape[1] == ids.shape[0] == 72
