"""``neuromod`` command line: train, summarize, replay, specialization.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .environments import BehaviorCue
from .exceptions import ConfigError, NumericalFailure, ParseError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("neuromod")


def _on_off(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--env", choices=("hopper", "walker"))
    p.add_argument("--strategy", choices=("naive", "episodes", "paired"))
    p.add_argument("--gating", type=_on_off, metavar="on|off")
    p.add_argument("--seed", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--pairs", type=int, dest="n_pairs")
    p.add_argument("--sigma", type=float)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--hidden", type=int)
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--replications", type=int)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--jobs", type=int, help="replications to run concurrently")


RUN_KEYS = ("env", "strategy", "gating", "seed", "generations", "n_pairs", "sigma",
            "learning_rate", "weight_decay", "hidden", "max_steps", "replications", "out_dir", "jobs")


def _run_config(args) -> harness.RunConfig:
    return harness.load_config(args.config, **{k: getattr(args, k) for k in RUN_KEYS})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neuromod", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="no per-generation progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run replicated training")
    _add_run_options(p)

    p = sub.add_parser("summarize", help="final-fitness statistics across replications")
    p.add_argument("dirs", nargs="+", type=Path, help="experiment directories, one summary row each")
    p.add_argument("--output", type=Path, default=None, help="default: <first dir>/summary.csv")

    p = sub.add_parser("replay", help="roll out a saved policy and dump its trajectory")
    _add_run_options(p)
    p.add_argument("params", type=Path)
    p.add_argument("--behavior", default="B1", help="B1 or B2")
    p.add_argument("--trajectory", type=Path, default=None, help="CSV path (default: stdout summary only)")

    p = sub.add_parser("specialization", help="per-gate specialization report of a gated policy")
    _add_run_options(p)
    p.add_argument("params", type=Path)
    p.add_argument("--episodes", type=int, default=1, help="episodes per behavior")
    p.add_argument("--output", type=Path, default=Path("specialization.csv"))
    return parser


def _cmd_train(args) -> int:
    config = _run_config(args)
    outcomes = harness.run_experiment(config, progress=not args.quiet)
    errors = [o.error[0] for o in outcomes if o.error]
    for o in outcomes:
        if not o.error:
            print(o.curve_path)
    if "io" in errors:
        return EXIT_IO
    if errors:
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_summarize(args) -> int:
    groups = {}
    for d in args.dirs:
        if not d.is_dir():
            raise FileNotFoundError(f"no such experiment directory: {d}")
        groups[d.name or str(d)] = harness.curve_files(d)
    out = args.output or (args.dirs[0] / "summary.csv")
    for s in harness.summarize(groups, out):
        print(f"{s.config}: n={s.n} mean={s.mean:.4f} std={s.std:.4f}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    config = _run_config(args)
    params, topology = harness.load_policy(args.params, config.env, config.hidden, config.gating)
    try:
        behavior = BehaviorCue.parse(args.behavior)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    fitness, rows = harness.replay(params, topology, config.env, behavior, config.max_steps, args.trajectory)
    print(f"fitness {fitness!r} steps {len(rows)}")
    return EXIT_OK


def _cmd_specialization(args) -> int:
    config = _run_config(args)
    if not config.gating:
        raise ConfigError("specialization needs --gating on")
    params, topology = harness.load_policy(args.params, config.env, config.hidden, True)
    report = harness.write_specialization(params, topology, config.env, range(args.episodes),
                                          config.max_steps, args.output)
    print(f"aggregate specialization {report.aggregate:.6f}")
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "summarize": _cmd_summarize,
    "replay": _cmd_replay,
    "specialization": _cmd_specialization,
}


def _configure_logging(quiet: bool) -> None:
    # a handler of our own, so progress reaches stderr even when the host configured logging
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    _configure_logging(args.quiet)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ParseError):
            log.error("parse error: %s", exc)
            return EXIT_IO
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
