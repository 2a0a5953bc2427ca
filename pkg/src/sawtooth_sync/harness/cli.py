"""Command line entry point: ``sawtooth-sync run`` / ``sawtooth-sync validate``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys

from .config import EXPERIMENTS, ConfigError, load_config, make_config, worker_count
from .experiments import (acceptance_checks, dump_to_csv, rows_to_csv,
                          run_experiment, verify_dump)

log = logging.getLogger("sawtooth_sync")

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 2, 3


def _versions():
    import matplotlib
    import numpy
    import scipy

    from .. import __version__
    return {"python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
            "sawtooth_sync": __version__}


def _build_parser():
    ap = argparse.ArgumentParser(prog="sawtooth-sync",
                                 description="Sawtooth RTT clock-sync and ranging experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="JSON config; built-in defaults if omitted")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--out")
    run.add_argument("--emit-plots", action="store_true", default=None)
    run.add_argument("--profile", choices=("desk", "ci", "paper"))
    run.add_argument("--workers", type=int, help="worker processes (capped by SAWTOOTH_SYNC_THREADS)")
    run.add_argument("--dump-reps", action="store_true",
                     help="also write per-repetition squared errors")
    run.add_argument("--verify", action="store_true",
                     help="recompute every MSE from the per-rep dump")
    run.add_argument("--assert", dest="check", action="store_true",
                     help="exit 3 if the experiment's acceptance checks fail")
    run.add_argument("-v", "--verbose", action="store_true")

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    return ap


def _config_from_args(args):
    overrides = dict(experiment=args.experiment, seed=args.seed, reps=args.reps,
                     out=args.out, emit_plots=args.emit_plots, profile=args.profile)
    if args.config:
        return load_config(args.config, **overrides)
    return make_config(None, **overrides)


def cmd_run(args) -> int:
    try:
        cfg = _config_from_args(args)
        workers = worker_count(args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(cfg.out, exist_ok=True)
    log.info("running %s with %d reps on %d worker(s)", cfg.experiment, cfg.reps, workers)

    dump = [] if (args.dump_reps or args.verify) else None
    rows = run_experiment(cfg, workers=workers, dump=dump)
    csv_text = rows_to_csv(rows)
    base = os.path.join(cfg.out, cfg.experiment)
    files = [cfg.experiment + ".csv"]
    with open(base + ".csv", "w", newline="") as fh:
        fh.write(csv_text)
    if dump is not None:
        with open(base + "_reps.csv", "w", newline="") as fh:
            fh.write(dump_to_csv(dump))
        files.append(cfg.experiment + "_reps.csv")
    if cfg.emit_plots:
        from .plotting import plot_rows
        if plot_rows(rows, base + ".svg", title=cfg.experiment):
            files.append(cfg.experiment + ".svg")

    manifest = {"config": cfg.to_dict(), "seed": cfg.seed, "experiment": cfg.experiment,
                "workers": workers, "versions": _versions(), "files": files}
    with open(os.path.join(cfg.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    status = EXIT_OK
    if args.verify:
        problems = verify_dump(csv_text, dump_to_csv(dump))
        for p in problems:
            print(f"verify: {p}", file=sys.stderr)
        print(f"verify: {'ok' if not problems else 'FAILED'}")
        if problems:
            status = EXIT_ASSERT
    if args.check:
        for name, ok, detail in acceptance_checks(cfg, rows):
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
            if not ok:
                status = EXIT_ASSERT
    print(f"wrote {', '.join(files)} to {cfg.out}")
    return status


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {cfg.experiment}, {cfg.reps} reps, seed {cfg.seed}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
