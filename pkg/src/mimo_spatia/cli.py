"""Command-line front end: ``mimo-spatia run <config>`` and ``mimo-spatia selftest``."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from mimo_spatia import __version__
from mimo_spatia.config import ConfigError, ExperimentConfig, parse_config, serialize_config

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_IO = 3

THREADS_ENV = "MIMO_SPATIA_THREADS"

log = logging.getLogger("mimo_spatia")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def resolve_threads(cli_value: int | None) -> int:
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def dispatch(cfg: ExperimentConfig, out_dir: Path, *, threads: int = 1, config_path: str | None = None) -> list[Path]:
    """Run ``cfg``, write one CSV per result table plus ``<stem>.manifest.json``.

    Returns the written paths (manifest last).
    """
    from mimo_spatia.scenarios import run_experiment

    started = _now()
    tables = run_experiment(cfg, threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for table in tables:
        path = out_dir / f"{table.name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(table.to_csv())
        written.append(path)
    manifest = {
        "config_path": config_path,
        "config": cfg.to_dict(),
        "config_toml": serialize_config(cfg),
        "master_seed": cfg.seed,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": [p.name for p in written],
    }
    mpath = out_dir / f"{tables[0].name}.manifest.json"
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(mpath)
    return written


def _cmd_run(args) -> int:
    from mimo_spatia.linalg import LinAlgError
    from mimo_spatia.scenarios import ExperimentError

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        threads = resolve_threads(args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = dispatch(cfg, Path(args.out), threads=threads, config_path=str(args.config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentError, LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from mimo_spatia.selftest import run_selftest

    return EXIT_OK if run_selftest(sys.stdout) else EXIT_NUMERIC


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; exit 2 is reserved for numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mimo-spatia", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mimo-spatia {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config and write CSV outputs")
    run.add_argument("config")
    run.add_argument("--out", default=".", help="output directory (default: current directory)")
    run.add_argument("--seed", type=int, default=None, help="override monte_carlo.seed")
    run.add_argument("--threads", type=int, default=None,
                     help=f"worker threads (default: ${THREADS_ENV} or 1)")
    run.set_defaults(func=_cmd_run)
    st = sub.add_parser("selftest", help="run the analytic-oracle checks")
    st.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
