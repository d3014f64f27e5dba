"""Small fixtures shared by the CLI and acceptance tests."""

import os

from rapnet.cli import main

# manifest.json records wall-clock time, so reruns compare every other file
VOLATILE = {"manifest.json"}

TINY_CONFIG = """\
arch = 16-8-6-4
synthetic = true
num_classes = 4
synthetic_noise = 0.3
train_size = 80
test_size = 40
lr_schedule = 3:0.1
batch_size = 10
inference_samples = 10
"""


def write_tiny_config(directory, extra=""):
    path = os.path.join(directory, "exp.txt")
    with open(path, "w") as fh:
        fh.write(TINY_CONFIG + extra)
    return path


def snapshot(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        if name not in VOLATILE:
            with open(os.path.join(directory, name), "rb") as fh:
                out[name] = fh.read()
    return out


def run_twice(tmp_path, tag, argv):
    """Run ``rapnet`` twice into fresh directories; return exit codes and file snapshots."""
    results = []
    for k in (1, 2):
        out = os.path.join(str(tmp_path), f"{tag}-{k}")
        code = main(argv + ["--out", out])
        results.append((code, snapshot(out)))
    return results


def cli_commands(tmp_path):
    """One small invocation per subcommand; training runs first to produce a checkpoint."""
    cfg = write_tiny_config(str(tmp_path))
    ckpt_dir = os.path.join(str(tmp_path), "ckpt")
    assert main(["train", "--config", cfg, "--out", ckpt_dir]) == 0
    ckpt = os.path.join(ckpt_dir, "checkpoint.bin")
    dc_cfg = write_tiny_config(os.path.join(str(tmp_path)), "dropconnect = 2:0.5\n")
    return {
        "rap-sweep": ["rap-sweep", "--n", "200", "--lambda-grid", "1:3:1", "--samples", "2",
                      "--degree-lambda", "2.0"],
        "rap-oracle": ["rap-oracle", "--acyclic", "4", "--loopy", "2", "--max-vars", "12"],
        "train": ["train", "--config", cfg],
        "dilute": ["dilute", "--config", cfg, "--checkpoint", ckpt, "--p1", "0:1:0.5", "--replicates", "3"],
        "path-stats": ["path-stats", "--checkpoint", ckpt, "--num-paths", "2000"],
        "infer": ["infer", "--config", dc_cfg, "--checkpoint", ckpt],
    }
