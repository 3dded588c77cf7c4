import csv
import json
import re

import numpy as np
import pytest

from nbaiot_ids.cli import EXIT_DATA, EXIT_NUMERIC, main
from nbaiot_ids.ingest import read_feature_csv


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, synth_root):
    out = tmp_path_factory.mktemp("run")
    assert main(["prepare", "--data-root", str(synth_root), "--out", str(out), "--per-class-cap", "60"]) == 0
    assert main(["train", "--out", str(out), "--epochs", "2", "--filters", "8", "--batch-size", "32"]) == 0
    return out


def test_prepare_outputs(run_dir, synth_root, tmp_path, capsys):
    summary = json.loads((run_dir / "prepare.json").read_text())
    assert all(v <= 60 for v in summary["class_counts"].values())
    assert summary["split_sizes"] == {"train": 336, "val": 48, "test": 96}
    rows = list(csv.reader((run_dir / "class_counts.csv").open()))
    assert rows[0] == ["class", "total", "train", "val", "test"] and rows[-1][0] == "total"
    again = tmp_path / "again"
    main(["prepare", "--data-root", str(synth_root), "--out", str(again), "--per-class-cap", "60", "--json"])
    assert json.loads(capsys.readouterr().out)["manifest_sha256"] == summary["manifest_sha256"]


def test_train_outputs(run_dir):
    hist = list(csv.reader((run_dir / "history.csv").open()))
    assert len(hist) == 3 and all(len(r) == 7 for r in hist)
    params = json.loads((run_dir / "params.json").read_text())
    assert params["total"] == sum(params["layers"].values())
    assert "closed_form_estimate" in params
    log = [json.loads(line) for line in (run_dir / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in log] == [1, 2]


def test_train_is_byte_reproducible(run_dir, tmp_path, synth_root):
    other = tmp_path / "other"
    main(["prepare", "--data-root", str(synth_root), "--out", str(other), "--per-class-cap", "60"])
    main(["train", "--out", str(other), "--epochs", "2", "--filters", "8", "--batch-size", "32"])
    assert (other / "model.bsnt").read_bytes() == (run_dir / "model.bsnt").read_bytes()


def test_eval_prints_table_and_timing(run_dir, capsys):
    assert main(["eval", "--out", str(run_dir), "--split", "test"]) == 0
    out = capsys.readouterr().out
    assert "Test set" in out
    assert re.search(r"\d+\.\d{2} s \(\d+\.\d{2} ms/step\)", out)
    for col in ("TNR", "NPV", "FPR", "FDR", "FOR", "FNR"):
        assert col in out
    assert main(["eval", "--out", str(run_dir), "--split", "val", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_samples"] == 48 and payload["timing"]["seconds"] > 0
    assert (run_dir / "eval_test" / "metrics.json").exists()
    assert (run_dir / "eval_val" / "metrics.json").exists()
    assert json.loads((run_dir / "eval_test" / "timing.json").read_text())["steps"] >= 1


def test_predict_matches_eval(run_dir, synth_root, tmp_path):
    src = synth_root / "Danmini_Doorbell" / "benign_traffic.csv"
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(run_dir / "model.bsnt"), "--input", str(src), "--output", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:2] == ["row", "predicted"] and len(rows[0]) == 10
    assert len(rows) == 41
    probs = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    np.testing.assert_allclose(probs.sum(1), 1.0, atol=1e-6)
    assert sum(r[1] == "benign" for r in rows[1:]) >= 30

    headerless = tmp_path / "nohead.csv"
    np.savetxt(headerless, read_feature_csv(src)[:3], delimiter=",")
    out2 = tmp_path / "pred2.csv"
    main(["predict", "--model", str(run_dir / "model.bsnt"), "--input", str(headerless), "--no-header",
          "--output", str(out2)])
    short = list(csv.reader(out2.open()))[1:]
    assert [r[:2] for r in short] == [r[:2] for r in rows[1:4]]
    np.testing.assert_allclose([[float(v) for v in r[2:]] for r in short], probs[:3], atol=1e-6)


def test_exit_codes(tmp_path, run_dir, capsys):
    assert main(["prepare", "--data-root", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert main(["eval", "--out", str(tmp_path / "empty")]) == EXIT_DATA
    with pytest.raises(SystemExit) as e:
        main(["train", "--out", str(run_dir), "--lr", "-1"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["train", "--out", str(run_dir), "--filters", "8", "--kernel", "4"])
    assert e.value.code == 2
    bad = tmp_path / "bad.bsnt"
    bad.write_bytes(b"nope" + bytes(20))
    assert main(["predict", "--model", str(bad), "--input", str(bad)]) == EXIT_DATA
    assert EXIT_NUMERIC == 4


def test_params_command(capsys):
    assert main(["params", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["total"] == 1_018_952 and payload["closed_form_estimate"] == 839_626
