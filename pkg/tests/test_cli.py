import csv
import json
import os

import pytest

from cli_support import cli_commands, run_twice, write_tiny_config
from rapnet.cli import main


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def commands(tmp_path_factory):
    return cli_commands(tmp_path_factory.mktemp("cli"))


@pytest.mark.parametrize("name", ["rap-sweep", "rap-oracle", "train", "dilute", "path-stats", "infer"])
def test_rerun_is_byte_identical(commands, tmp_path, name):
    (c1, s1), (c2, s2) = run_twice(tmp_path, name, commands[name])
    assert c1 == c2 == 0
    assert s1 and s1 == s2


def test_rap_sweep_outputs(commands, tmp_path):
    out = str(tmp_path / "sweep")
    assert main(commands["rap-sweep"] + ["--out", out]) == 0
    assert len(rows(os.path.join(out, "rap_instances.csv"))) == 6
    agg = rows(os.path.join(out, "rap_aggregate.csv"))
    assert [float(r["lambda"]) for r in agg] == [1.0, 2.0, 3.0]
    crit = json.load(open(os.path.join(out, "critical.json")))
    assert crit["method"] == "analytic" and abs(crit["lambda_c"] - 6.3434) < 1e-4
    assert len(rows(os.path.join(out, "frozen_energy.csv"))) == 3
    deg = rows(os.path.join(out, "degrees.csv"))
    assert sum(int(r["count"]) for r in deg) == 600
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["status"] == "ok" and manifest["wall_clock_seconds"] >= 0


def test_oracle_outputs(commands, tmp_path):
    out = str(tmp_path / "oracle")
    assert main(commands["rap-oracle"] + ["--out", out]) == 0
    table = rows(os.path.join(out, "oracle.csv"))
    assert len(table) == 6 * 3
    for r in table:
        if r["acyclic"] == "1":
            assert float(r["abs_diff"]) < 1e-10


def test_train_outputs(commands, tmp_path):
    out = str(tmp_path / "train")
    assert main(commands["train"] + ["--out", out]) == 0
    assert sorted(os.listdir(out)) == ["checkpoint.bin", "config.txt", "curve.csv", "manifest.json"]
    assert [r["epoch"] for r in rows(os.path.join(out, "curve.csv"))] == ["1", "2", "3"]


def test_dilute_outputs(commands, tmp_path):
    out = str(tmp_path / "dilute")
    assert main(commands["dilute"] + ["--out", out]) == 0
    table = rows(os.path.join(out, "dilution.csv"))
    assert [float(r["p1"]) for r in table] == [0.0, 0.5, 1.0]
    assert list(table[0]) == ["p1", "p2", "p3", "err_mean", "err_stderr", "replicates"]


def test_infer_outputs(commands, tmp_path):
    out = str(tmp_path / "infer")
    assert main(commands["infer"] + ["--out", out]) == 0
    assert len(rows(os.path.join(out, "predictions.csv"))) == 40
    info = json.load(open(os.path.join(out, "inference.json")))
    assert info["gaussian"] and info["samples"] == 10


def test_usage_error_exit_code(tmp_path):
    out = str(tmp_path / "bad")
    assert main(["rap-oracle", "--max-vars", "30", "--out", out]) == 2
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert manifest["status"] == "failed" and manifest["exit_code"] == 2


def test_config_range_error(tmp_path):
    cfg = write_tiny_config(str(tmp_path), "dropconnect = 1:1.5\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_checkpoint(tmp_path):
    code = main(["path-stats", "--checkpoint", str(tmp_path / "none.bin"), "--out", str(tmp_path / "o")])
    assert code == 3


def test_corrupt_idx(tmp_path):
    (tmp_path / "img").write_bytes(b"\x00\x00\x08\x01bad")
    (tmp_path / "lab").write_bytes(b"\x00\x00\x08\x01")
    cfg = tmp_path / "c.txt"
    cfg.write_text(f"arch = 4-3-2\ntrain_images = {tmp_path / 'img'}\ntrain_labels = {tmp_path / 'lab'}\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverged_training_exit_code(tmp_path):
    cfg = write_tiny_config(str(tmp_path), "lr_schedule = 2:1e308\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


def test_argparse_usage_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["rap-sweep"])
    assert exc.value.code == 2
