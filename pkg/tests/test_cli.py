import csv
import json
import subprocess
import sys

import pytest

from causalwalk.cli import main
from causalwalk.scm import confounded_scm, save_scm

MODEL = ["--feature-dim", "32", "--hidden-dim", "8", "--n-clusters", "2", "--epochs", "2"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--out-dir", str(out), "--n-train", "16", "--n-dev", "6", "--n-test", "6"]) == 0
    return out


def test_gen_data_writes_every_split(data_dir):
    names = sorted(p.name for p in data_dir.glob("*.jsonl"))
    assert names == ["dev.jsonl", "test_adversarial.jsonl", "test_id.jsonl", "test_symmetric.jsonl", "train.jsonl"]
    assert json.loads((data_dir / "config.json").read_text())["n_train"] == 16


def test_train_then_eval_round_trip(data_dir, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--data-dir", str(data_dir), "--out-dir", str(run), *MODEL]) == 0
    history = rows(run / "train_metrics.csv")
    assert [r["epoch"] for r in history] == ["1", "2"]
    assert list(history[0]) == ["epoch", "L_walk", "L_causal", "L_total", "dev_accuracy"]
    assert json.loads((run / "config.json").read_text())["hidden_dim"] == 8

    ev = tmp_path / "eval"
    assert main(["eval", "--data-dir", str(data_dir), "--checkpoint", str(run / "model.ckpt"),
                 "--out-dir", str(ev)]) == 0
    metrics = {r["split"]: r for r in rows(ev / "metrics.csv")}
    assert set(metrics) == {"dev", "test_id", "test_adversarial", "test_symmetric"}
    assert float(metrics["dev"]["accuracy"]) == float(history[-1]["dev_accuracy"])
    assert metrics["dev"]["mode"] == "causal"
    assert "precision_SUPPORTS" in metrics["dev"] and "recall_REFUTES" in metrics["dev"]

    both = tmp_path / "both"
    assert main(["eval", "--data-dir", str(data_dir), "--checkpoint", str(run / "model.ckpt"),
                 "--out-dir", str(both), "--mode", "both", "--splits", "test_id", "--n-jobs", "2"]) == 0
    assert [r["mode"] for r in rows(both / "metrics.csv")] == ["causal", "walk-only"]


def test_empty_split_reports_json_error(data_dir, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--data-dir", str(data_dir), "--out-dir", str(run), *MODEL, "--epochs", "1"]) == 0
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "test_id.jsonl").write_text("")
    code = main(["eval", "--data-dir", str(empty), "--checkpoint", str(run / "model.ckpt"),
                 "--out-dir", str(tmp_path / "e"), "--splits", "test_id"])
    assert code == 2
    assert last_error(capsys) == {"error": "empty dataset", "command": "eval"}


def test_malformed_arguments(capsys):
    assert main(["train", "--data-dir"]) == 2
    err = last_error(capsys)
    assert err["command"] == "train" and "argument" in err["error"]
    assert main(["gen-data", "--out-dir", "x", "--n-train", "many"]) == 2
    assert "invalid int" in last_error(capsys)["error"]
    assert main(["no-such-command"]) == 2


def test_missing_data_dir(tmp_path, capsys):
    assert main(["train", "--data-dir", str(tmp_path / "nope"), "--out-dir", str(tmp_path)]) == 2
    assert "does not exist" in last_error(capsys)["error"]


def test_scm_verify(tmp_path, capsys):
    scm = tmp_path / "c.scm"
    save_scm(confounded_scm(), scm)
    assert main(["scm-verify", "--n-scms", "20", "--scm-file", str(scm), "--out-dir", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["file_deviation"] < 1e-12
    assert json.loads((tmp_path / "scm_verify.json").read_text()) == report


def test_ablate_small(data_dir, tmp_path):
    out = tmp_path / "abl"
    code = main(["ablate", "--data-dir", str(data_dir), "--out-dir", str(out), *MODEL, "--epochs", "1",
                 "--n-seeds", "2", "--variants", "causal", "walk-only+evidence", "--splits", "test_id"])
    assert code == 0
    runs = rows(out / "ablation_runs.csv")
    assert len(runs) == 4 and {r["seed"] for r in runs} == {"0", "1"}
    summary = rows(out / "ablation_summary.csv")
    assert [r["variant"] for r in summary] == ["causal", "walk-only+evidence"]
    assert all(r["n_seeds"] == "2" for r in summary)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "causalwalk", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("causalwalk ")
