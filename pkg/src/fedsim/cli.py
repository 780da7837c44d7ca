"""Command-line front door: run experiments, list records, export plot data,
or serve the HTTP control API.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 130 interrupted.
"""

from __future__ import annotations

import argparse
import difflib
import os
import shlex
import signal
import sys
import threading
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import store
from .engine import (FAILED, RUNNING, STOPPED, ConfigError, RunConfig,
                     run_experiment)
from .problems import (ProblemError, ProblemSpec, format_problem_string,
                       parse_problem_string)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_INTERRUPT = 130


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Validation failures raise instead of exiting, and unknown flags get a
    nearest-match suggestion."""

    def error(self, message):
        if "unrecognized arguments" in message:
            bad = message.split(":", 1)[1].strip().split()
            hints = []
            known = [a for action in self._actions for a in action.option_strings]
            for flag in bad:
                close = difflib.get_close_matches(flag, known, n=1)
                hints.append(f"unknown flag {flag}"
                             + (f" (did you mean {close[0]}?)" if close else ""))
            raise CliError("; ".join(hints))
        raise CliError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="fedsim", allow_abbrev=False,
                description="Desk-scale federated optimization simulator.")
    run = p.add_argument_group("run configuration")
    run.add_argument("--algorithm", default="fedavg",
                     help="gd | dcgd | fedavg | fedprox | scaffold | diana | marina | ef21")
    run.add_argument("--rounds", type=int, default=100,
                     help="number of communication rounds T")
    run.add_argument("--clients", type=int, default=None,
                     help="number of clients M (overrides the problem spec)")
    run.add_argument("--clients-per-round", type=int, default=None,
                     help="sampled clients per round (default: all)")
    run.add_argument("--global-lr", type=float, default=1.0)
    run.add_argument("--local-lr", type=float, default=1.0)
    run.add_argument("--local-steps", type=int, default=None,
                     help="local optimizer steps per round (default 1)")
    run.add_argument("--local-epochs", type=int, default=None,
                     help="local passes over the data (alternative to --local-steps)")
    run.add_argument("--compressor", default="identity",
                     help="uplink compressor, e.g. identity, randk:40%%, bern:0.8")
    run.add_argument("--compressor-down", default=None,
                     help="optional downlink compressor")
    run.add_argument("--oracle", default="full",
                     help="gradient oracle: full or nice:<tau>")
    run.add_argument("--problem", default="quad",
                     help="problem spec, e.g. quad:d=20,mu=1,L=2 or logreg:d=50")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--threads", type=int, default=1,
                     help="worker threads for parallel client execution")
    run.add_argument("--eval-every", type=int, default=1,
                     help="evaluate global metrics every k rounds")
    run.add_argument("--group", default=None, help="experiment group tag")
    run.add_argument("--comment", default=None, help="free-text comment")
    run.add_argument("--shift-init", default="zero", choices=["zero", "fullgrad"],
                     help="client shift initialization policy")
    run.add_argument("--marina-p", type=float, default=0.5,
                     help="marina full-sync probability")
    run.add_argument("--diana-alpha", type=float, default=0.5,
                     help="diana shift learning rate")
    run.add_argument("--prox-mu", type=float, default=0.0,
                     help="fedprox proximal coefficient")
    run.add_argument("--weights", default=None,
                     choices=["uniform", "by-dataset-size"],
                     help="client aggregation weights")

    misc = p.add_argument_group("modes and output")
    misc.add_argument("--out-dir", default=None,
                      help="record directory (default $FEDSIM_OUT_DIR or ./runs)")
    misc.add_argument("--list", action="store_true",
                      help="list stored experiment records and exit")
    misc.add_argument("--export", default=None, metavar="IDS",
                      help="comma-separated run ids: write CSV + PNG and exit")
    misc.add_argument("--x-axis", default="rounds",
                      choices=sorted(store.X_AXES), help="export x axis")
    misc.add_argument("--y-axis", default="grad_norm",
                      choices=sorted(store.Y_AXES), help="export y axis")
    misc.add_argument("--y-scale", default="linear", choices=["linear", "log"])
    misc.add_argument("--export-out", default=None, metavar="PREFIX",
                      help="output path prefix for --export (PREFIX.csv, PREFIX.png)")
    misc.add_argument("--serve", action="store_true",
                      help="start the HTTP control API instead of running")
    misc.add_argument("--bind", default="127.0.0.1:8000",
                      help="address for --serve, host:port")
    return p


def default_out_dir(value: Optional[str]) -> str:
    return value or os.environ.get("FEDSIM_OUT_DIR") or "runs"


def config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        spec = parse_problem_string(args.problem)
        if args.clients is not None:
            spec = replace(spec, clients=args.clients)
        if args.weights is not None:
            spec = replace(spec, weights=args.weights)
        return RunConfig(
            algorithm=args.algorithm, rounds=args.rounds,
            clients_per_round=args.clients_per_round,
            global_lr=args.global_lr, local_lr=args.local_lr,
            local_steps=args.local_steps if args.local_steps is not None else 1,
            local_epochs=args.local_epochs, compressor=args.compressor,
            compressor_down=args.compressor_down, oracle=args.oracle,
            problem=spec, seed=args.seed, threads=args.threads,
            eval_every=args.eval_every, group=args.group, comment=args.comment,
            shift_init=args.shift_init, marina_p=args.marina_p,
            diana_alpha=args.diana_alpha, prox_mu=args.prox_mu)
    except (ProblemError, ConfigError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def parse_args(argv: list[str]) -> tuple[argparse.Namespace, Optional[RunConfig]]:
    """Returns (namespace, config); config is None for list/export/serve modes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list or args.export is not None or args.serve:
        return args, None
    return args, config_from_args(args)


def emit_cli_line(config: RunConfig) -> str:
    """Shell-safe command line that re-parses to exactly this config."""
    default = RunConfig()
    parts = ["fedsim"]

    def flag(name: str, value) -> None:
        parts.append(f"--{name}")
        parts.append(shlex.quote(str(value)))

    if config.algorithm != default.algorithm:
        flag("algorithm", config.algorithm)
    if config.rounds != default.rounds:
        flag("rounds", config.rounds)
    if config.clients_per_round is not None:
        flag("clients-per-round", config.clients_per_round)
    if config.global_lr != default.global_lr:
        flag("global-lr", _num(config.global_lr))
    if config.local_lr != default.local_lr:
        flag("local-lr", _num(config.local_lr))
    if config.local_steps != default.local_steps:
        flag("local-steps", config.local_steps)
    if config.local_epochs is not None:
        flag("local-epochs", config.local_epochs)
    if config.compressor != default.compressor:
        flag("compressor", config.compressor)
    if config.compressor_down is not None:
        flag("compressor-down", config.compressor_down)
    if config.oracle != default.oracle:
        flag("oracle", config.oracle)
    problem_str = format_problem_string(config.problem)
    if problem_str != format_problem_string(default.problem):
        flag("problem", problem_str)
    if config.seed != default.seed:
        flag("seed", config.seed)
    if config.threads != default.threads:
        flag("threads", config.threads)
    if config.eval_every != default.eval_every:
        flag("eval-every", config.eval_every)
    if config.group is not None:
        flag("group", config.group)
    if config.comment is not None:
        flag("comment", config.comment)
    if config.shift_init != default.shift_init:
        flag("shift-init", config.shift_init)
    if config.marina_p != default.marina_p:
        flag("marina-p", _num(config.marina_p))
    if config.diana_alpha != default.diana_alpha:
        flag("diana-alpha", _num(config.diana_alpha))
    if config.prox_mu != default.prox_mu:
        flag("prox-mu", _num(config.prox_mu))
    return " ".join(parts)


def _num(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


# --------------------------------------------------------------------------
# mode handlers
# --------------------------------------------------------------------------

def _run_mode(config: RunConfig, out_dir: str) -> int:
    record = store.ExperimentRecord.fresh(config, status=RUNNING)
    stop = threading.Event()
    interrupted = {"flag": False}

    def handler(signum, frame):
        interrupted["flag"] = True
        stop.set()

    old_int = signal.signal(signal.SIGINT, handler)
    old_term = signal.signal(signal.SIGTERM, handler)
    try:
        def on_row(row):
            record.rows.append(row)
            if len(record.rows) % 25 == 0:
                store.save_record(record, out_dir)

        result = run_experiment(config, stop_event=stop, on_row=on_row)
    finally:
        signal.signal(signal.SIGINT, old_int)
        signal.signal(signal.SIGTERM, old_term)

    record.rows = result.rows
    record.status = result.status
    record.error = result.error
    path = store.save_record(record, out_dir)

    print(f"run {record.id}: {record.status} "
          f"({len(record.rows)} rows) -> {path}")
    if record.rows:
        last = record.rows[-1]
        print(f"  round {last.round}: f={last.f_global:.6g} "
              f"|grad|={last.grad_norm_global:.6g} "
              f"bits_up={last.bits_up_cum} oracle={last.oracle_calls_cum}")
    if result.status == FAILED:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_RUNTIME
    if result.status == STOPPED and interrupted["flag"]:
        return EXIT_INTERRUPT
    return EXIT_OK


def _list_mode(out_dir: str, group: Optional[str], algorithm: Optional[str]) -> int:
    records = store.list_records(out_dir, group=group, algorithm=algorithm)
    if not records:
        print("no records")
        return EXIT_OK
    for rec in records:
        s = rec.summary()
        print(f"{s['id']}  {s['status']:<9} {s['algorithm']:<9} "
              f"{s['compressor']:<14} rows={s['rounds_done']:<5} "
              f"group={s['group'] or '-'}")
    return EXIT_OK


def _export_mode(args: argparse.Namespace, out_dir: str) -> int:
    from .plots import render_series, run_labels
    ids = [i for i in args.export.split(",") if i]
    records = [store.load_record(out_dir, rid) for rid in ids]
    export = store.export_series(records, args.x_axis, args.y_axis, args.y_scale)
    prefix = args.export_out or os.path.join(out_dir, "export")
    csv_path = prefix + ".csv"
    with open(csv_path, "w") as fh:
        fh.write(export.to_csv())
    png_path = render_series(export, prefix + ".png", labels=run_labels(records))
    dropped = sum(export.dropped.values())
    note = f" ({dropped} nonpositive points dropped)" if dropped else ""
    print(f"wrote {csv_path} and {png_path}{note}")
    return EXIT_OK


def _serve_mode(args: argparse.Namespace, out_dir: str) -> int:
    import uvicorn

    from .api import create_app
    host, _, port = args.bind.partition(":")
    # serve the web UI when a built frontend sits next to the package
    static = Path(__file__).resolve().parents[2] / "frontend"
    static_dir = static if (static / "index.html").exists() else None
    app = create_app(out_dir, default_threads=args.threads,
                     static_dir=static_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000),
                log_level="warning")
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    try:
        args, config = parse_args(argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = default_out_dir(args.out_dir)
    try:
        if args.list:
            return _list_mode(out_dir, args.group, None)
        if args.export is not None:
            return _export_mode(args, out_dir)
        if args.serve:
            return _serve_mode(args, out_dir)
        return _run_mode(config, out_dir)
    except store.StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failures surface as exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
