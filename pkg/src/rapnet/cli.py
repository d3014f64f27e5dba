"""Command-line batch runs; every subcommand writes CSV/JSON under ``--out``.

Exit codes: 0 success, 2 usage or parameter error, 3 data error (missing or
malformed input files), 4 numerical failure.  A ``manifest.json`` with the
resolved settings is written after argument parsing, also on failure.
"""

import argparse
import json
import os
import sys
import time
import traceback
from dataclasses import asdict, fields

from . import __version__
from .data import (
    ConfigError,
    ExperimentConfig,
    IdxError,
    experiment_datasets,
    load_config,
    parse_grid,
    write_config,
    write_results,
)
from .exact import EnumerationTooLarge, MAX_VARIABLES, compare_bp_exact, oracle_suite
from .graph import RapParams, build_rap, degree_histogram, write_degree_csv
from .network import (
    CheckpointError,
    DropconnectConfig,
    TrainConfig,
    TrainingDiverged,
    dilution_sweep,
    gaussian_inference,
    init_mlp,
    load_mlp,
    make_feedback,
    path_product_histogram,
    predict_proba,
    save_mlp,
    test_error,
    train,
)
from .solver import SolverConfig, find_lambda_c, frozen_energy_curve, sweep_lambda

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def _grid(text):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _out(args, name):
    return os.path.join(args.out, name)


def _write_json(obj, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _experiment_config(args):
    overrides = {}
    if getattr(args, "synthetic", False):
        overrides["synthetic"] = True
    if getattr(args, "train_seed", None) is not None:
        overrides["seed"] = args.train_seed
    if args.config:
        return load_config(args.config, overrides)
    return ExperimentConfig(**overrides)


def _config_snapshot(cfg):
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def cmd_rap_sweep(args, manifest):
    grid = args.lambda_grid
    config = SolverConfig(
        beta=args.beta, damping=args.damping, tol=args.tol, max_iters=args.max_iters,
        init_mode=args.init, amplitude=args.amplitude,
    )
    manifest["config"] = {"n": args.n, "p": args.p, "lambda_grid": grid, "samples": args.samples,
                          "solver": asdict(config), "critical_mode": args.critical_mode}
    result = sweep_lambda(args.n, grid, args.samples, config, args.seed, args.p, args.threads)
    write_results(*result.instance_table(), _out(args, "rap_instances.csv"))
    write_results(*result.aggregate_table(), _out(args, "rap_aggregate.csv"))

    lo, hi = args.bracket
    critical = find_lambda_c(args.n, config, (lo, hi), mode=args.critical_mode,
                             num_samples=args.samples, root_seed=args.seed, depth=args.p)
    with open(_out(args, "critical.json"), "w", newline="\n") as fh:
        fh.write(critical.to_json() + "\n")
    write_results(["lambda", "e"], frozen_energy_curve(grid, critical, args.beta, args.p),
                  _out(args, "frozen_energy.csv"))
    if args.degree_lambda is not None:
        graph, _ = build_rap(RapParams.from_lambda(args.n, args.p, args.degree_lambda, args.seed))
        write_degree_csv(degree_histogram(graph), _out(args, "degrees.csv"), args.degree_lambda)


def cmd_rap_oracle(args, manifest):
    if args.max_vars > MAX_VARIABLES:
        raise UsageError(f"--max-vars {args.max_vars} exceeds the enumeration limit of {MAX_VARIABLES}")
    config = SolverConfig(beta=args.beta, init_mode="random", amplitude=0.1, seed=args.seed)
    manifest["config"] = {"acyclic": args.acyclic, "loopy": args.loopy, "max_vars": args.max_vars,
                          "solver": asdict(config)}
    rows = []
    for k, graph in enumerate(oracle_suite(args.acyclic, args.loopy, args.max_vars, args.seed)):
        report = compare_bp_exact(graph, config)
        for quantity, bp, exact, diff in report.rows:
            rows.append([k, graph.depth, graph.num_variables, graph.num_interactions,
                         int(report.acyclic), quantity, bp, exact, diff])
    cols = ["instance", "p", "num_vars", "num_interactions", "acyclic", "quantity", "bp", "exact", "abs_diff"]
    write_results(cols, rows, _out(args, "oracle.csv"))


def _train_objects(cfg, net):
    dc = DropconnectConfig(dict(cfg.dropconnect)) if cfg.dropconnect else None
    fb = make_feedback(net, cfg.fa_layers, cfg.fa_bound, cfg.seed) if cfg.fa_layers else None
    return dc, fb


def cmd_train(args, manifest):
    cfg = _experiment_config(args)
    manifest["config"] = _config_snapshot(cfg)
    train_set, test_set = experiment_datasets(cfg)
    net0 = init_mlp(cfg.widths, cfg.seed)
    dc, fb = _train_objects(cfg, net0)
    tc = TrainConfig(cfg.lr_schedule, cfg.batch_size, cfg.seed, cfg.train_size, cfg.test_size)
    net, curve = train(net0, train_set, tc, dc, fb, test_set)
    save_mlp(net, _out(args, "checkpoint.bin"))
    write_config(cfg, _out(args, "config.txt"))
    write_results(["epoch", "train_loss", "test_error"], curve, _out(args, "curve.csv"))


def _load_checkpoint(args):
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"checkpoint {args.checkpoint!r} not found")
    return load_mlp(args.checkpoint)


def cmd_dilute(args, manifest):
    net = _load_checkpoint(args)
    cfg = _experiment_config(args)
    L = net.num_layers
    axes = [args.p1, args.p2, args.p3][:L] + [[0.0]] * max(0, L - 3)
    grid = [()]
    for axis in axes:
        grid = [g + (p,) for g in grid for p in axis]
    manifest["config"] = {"experiment": _config_snapshot(cfg), "grid_points": len(grid),
                          "replicates": args.replicates}
    _, test_set = experiment_datasets(cfg)
    rows = dilution_sweep(net, grid, args.replicates, test_set, args.seed)
    cols = [f"p{l}" for l in range(1, L + 1)] + ["err_mean", "err_stderr", "replicates"]
    write_results(cols, rows, _out(args, "dilution.csv"))


def cmd_path_stats(args, manifest):
    net = _load_checkpoint(args)
    manifest["config"] = {"num_paths": args.num_paths, "bins": args.bins}
    stats = path_product_histogram(net, args.num_paths, args.bins, args.seed)
    write_results(["bin_lo", "bin_hi", "count"], stats.table(), _out(args, "path_hist.csv"))
    _write_json({"sign_balance": stats.sign_balance, "central_fraction_10pct": stats.central_fraction(0.1),
                 "num_paths": args.num_paths}, _out(args, "path_stats.json"))


def cmd_infer(args, manifest):
    net = _load_checkpoint(args)
    cfg = _experiment_config(args)
    samples = args.samples if args.samples is not None else cfg.inference_samples
    manifest["config"] = {"experiment": _config_snapshot(cfg), "samples": samples}
    _, test_set = experiment_datasets(cfg)
    if cfg.dropconnect:
        proba = gaussian_inference(net, test_set.inputs, DropconnectConfig(dict(cfg.dropconnect)),
                                   samples, args.seed)
    else:
        proba = predict_proba(net, test_set.inputs)
    pred = proba.argmax(axis=1)
    rows = [(k, int(y), int(c)) for k, (y, c) in enumerate(zip(test_set.labels, pred))]
    write_results(["example", "label", "prediction"], rows, _out(args, "predictions.csv"))
    _write_json({"test_error": test_error(net, test_set, proba), "samples": samples,
                 "gaussian": bool(cfg.dropconnect)}, _out(args, "inference.json"))


def _pair(text):
    lo, hi = (float(x) for x in text.split(":"))
    return lo, hi


def build_parser():
    parser = argparse.ArgumentParser(prog="rapnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rapnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0, help="root seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes (1 = sequential)")

    p = sub.add_parser("rap-sweep", help="BP thermodynamics over a grid of mean degrees")
    common(p)
    p.add_argument("--n", type=int, default=2000, help="weights per population")
    p.add_argument("--p", type=int, default=3, help="number of populations")
    p.add_argument("--lambda-grid", type=_grid, default=parse_grid("1:10:0.25"))
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--init", choices=("zero", "random"), default="random")
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--critical-mode", choices=("analytic", "bp"), default="analytic")
    p.add_argument("--bracket", type=_pair, default=(1.0, 10.0), help="lo:hi for the entropy root")
    p.add_argument("--degree-lambda", type=float, default=None,
                   help="also write the degree histogram of one instance at this mean degree")
    p.set_defaults(func=cmd_rap_sweep)

    p = sub.add_parser("rap-oracle", help="BP against exhaustive enumeration on small instances")
    common(p)
    p.add_argument("--acyclic", type=int, default=50)
    p.add_argument("--loopy", type=int, default=20)
    p.add_argument("--max-vars", type=int, default=20)
    p.add_argument("--beta", type=float, default=1.0)
    p.set_defaults(func=cmd_rap_oracle)

    def experiment(p):
        p.add_argument("--config", help="key = value experiment file")
        p.add_argument("--synthetic", action="store_true", help="use synthetic data")

    p = sub.add_parser("train", help="train a network; writes checkpoint and learning curve")
    common(p)
    experiment(p)
    p.add_argument("--train-seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dilute", help="test error under random removal of weights")
    common(p)
    experiment(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--p1", type=_grid, default=[0.0])
    p.add_argument("--p2", type=_grid, default=[0.0])
    p.add_argument("--p3", type=_grid, default=[0.0])
    p.add_argument("--replicates", type=int, default=20)
    p.set_defaults(func=cmd_dilute)

    p = sub.add_parser("path-stats", help="histogram of weight products along random paths")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--num-paths", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=50)
    p.set_defaults(func=cmd_path_stats)

    p = sub.add_parser("infer", help="predictions on the test split (Gaussian sampling under dropconnect)")
    common(p)
    experiment(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    manifest = {
        "subcommand": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "seed": args.seed,
        "out": args.out,
        "version": __version__,
        "config": None,
    }
    start = time.perf_counter()
    code = EXIT_OK
    try:
        args.func(args, manifest)
    except (UsageError, ConfigError, EnumerationTooLarge) as exc:
        code, manifest["error"] = EXIT_USAGE, str(exc)
    except (FileNotFoundError, IdxError, CheckpointError) as exc:
        code, manifest["error"] = EXIT_DATA, str(exc)
    except (TrainingDiverged, ArithmeticError) as exc:
        code, manifest["error"] = EXIT_NUMERIC, str(exc)
    except ValueError as exc:
        code, manifest["error"] = EXIT_USAGE, str(exc)
    except Exception as exc:  # noqa: BLE001 - still leave a manifest behind
        manifest["error"] = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        manifest["status"] = "crashed"
        manifest["wall_clock_seconds"] = time.perf_counter() - start
        _write_json(manifest, os.path.join(args.out, "manifest.json"))
        raise
    manifest["status"] = "ok" if code == EXIT_OK else "failed"
    manifest["exit_code"] = code
    manifest["wall_clock_seconds"] = time.perf_counter() - start
    _write_json(manifest, os.path.join(args.out, "manifest.json"))
    if code != EXIT_OK:
        print(f"rapnet {args.command}: {manifest['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
