"""Command line entry point.

    edsl generate --config exp.toml --out data/
    edsl run      --config exp.toml [--seed N] [--out results.csv]
    edsl plot     results.csv [--out figures/]
    edsl master   --config exp.toml --listen HOST:PORT [--out trace.csv]
    edsl worker   --config exp.toml --connect HOST:PORT --machine-id J

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure,
5 transport failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .datagen import generate, generate_heldout
from .errors import ConfigError, EdslError
from .harness.config import FileData, desk_scale, load_config
from .harness.plots import emit_plots
from .harness.runner import (Evaluator, prepare_trial, run_edsl_method, run_experiment,
                             worker_shard, write_results)
from .model import LossSpec
from .protocol.transport import DEFAULT_TIMEOUT, TcpMasterTransport, Worker, serve_worker

log = logging.getLogger("edsl")


def _address(text):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _config(args):
    config = load_config(args.config) if args.config else desk_scale()
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        changes["seed"] = args.seed
    if getattr(args, "rounds", None) is not None:
        changes["rounds"] = args.rounds
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    return config.replace(**changes) if changes else config


def _write_shard(path, shard, fmt):
    with open(path, "w") as fh:
        if fmt == "csv":
            fh.write("y," + ",".join(f"x{k + 1}" for k in range(shard.p)) + "\n")
            for x, y in zip(shard.xs, shard.ys):
                fh.write(",".join(repr(float(v)) for v in (y, *x)) + "\n")
        else:
            for x, y in zip(shard.xs, shard.ys):
                feats = " ".join(f"{k + 1}:{float(v)!r}" for k, v in enumerate(x) if v != 0)
                fh.write(f"{float(y)!r} {feats}".rstrip() + "\n")


def cmd_generate(args):
    config = _config(args)
    if isinstance(config.data, FileData):
        raise ConfigError("generate needs a synthetic data config")
    synth = config.synth_for_trial(0)
    dataset, truth = generate(synth)
    out = Path(args.out or "data")
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "libsvm"
    for shard in dataset.shards:
        _write_shard(out / f"shard_{shard.machine_id}.{ext}", shard, args.format)
    if config.test_rows:
        _write_shard(out / f"heldout.{ext}", generate_heldout(synth, config.test_rows, truth),
                     args.format)
    np.savetxt(out / "beta_star.txt", truth.beta_star, fmt="%.17g")
    print(out)
    return 0


def cmd_run(args):
    config = _config(args)
    for path in run_experiment(config, args.out):
        print(path)
    return 0


def cmd_plot(args):
    for path in emit_plots(args.csv, args.out):
        print(path)
    return 0


def cmd_master(args):
    config = _config(args)
    td = prepare_trial(config, 0)
    host, port = args.listen
    with TcpMasterTransport(host, port, td.m, td.p, timeout=args.timeout) as transport:
        print(f"listening {transport.address[0]}:{transport.address[1]}", flush=True)
        transport.accept_workers(args.timeout)
        rows = run_edsl_method(config, td, Evaluator(td, config.timing), transport)
    for path in write_results(args.out or config.output, rows):
        print(path)
    return 0


def cmd_worker(args):
    config = _config(args)
    shard = worker_shard(config, args.machine_id)
    host, port = args.connect
    worker = Worker(shard, LossSpec.for_task(config.task))
    rounds = serve_worker(host, port, worker, connect_timeout=args.timeout)
    log.info("worker %d served %d rounds", args.machine_id, rounds)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="edsl", description="Distributed sparse learning "
                                     "experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config (default: desk scale)")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("generate", help="write synthetic shards to text files")
    common(p)
    p.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run an experiment and write result CSVs")
    common(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render SVG charts from a result CSV")
    p.add_argument("csv")
    p.add_argument("--out", help="directory for the SVG files")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("master", help="run EDSL as machine 0 over TCP")
    common(p)
    p.add_argument("--listen", type=_address, required=True, metavar="HOST:PORT")
    p.add_argument("--rounds", type=int)
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    p.set_defaults(func=cmd_master)

    p = sub.add_parser("worker", help="serve gradients for one machine over TCP")
    common(p)
    p.add_argument("--connect", type=_address, required=True, metavar="HOST:PORT")
    p.add_argument("--machine-id", type=int, required=True)
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    p.set_defaults(func=cmd_worker)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EdslError as exc:
        print(f"edsl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"edsl: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
