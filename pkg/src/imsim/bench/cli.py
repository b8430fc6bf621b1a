"""Command line: ``imsim <subcommand> --config FILE [--seed N] [--out DIR]``.

Exit codes: 0 success, 2 invalid config, 3 missing artifact (checkpoint),
4 grad-check failure, 1 anything unexpected.

Environment: ``IMSIM_OUTPUT_DIR`` overrides the config's ``output_dir`` (``--out``
overrides both); ``IMSIM_THREADS`` caps BLAS threads and only takes effect when
set before numpy is first imported, i.e. from the command line.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_MISSING, EXIT_CHECK = 0, 1, 2, 3, 4
SUBCOMMANDS = ("gen-data", "train-ul", "eval-ul", "train-dl", "eval-dl", "sweep-sinr",
               "sweep-sf", "grad-check", "timing")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("imsim")


def _apply_thread_env() -> None:
    threads = os.environ.get("IMSIM_THREADS")
    if threads:
        for var in THREAD_VARS:
            os.environ[var] = threads


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imsim", description="Interference mitigation benchmarks")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress logging")
    return p


def resolve_out(cfg_dir: str, cli_out: str | None) -> Path:
    return Path(cli_out or os.environ.get("IMSIM_OUTPUT_DIR") or cfg_dir)


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    _apply_thread_env()
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)

    from ..errors import ConfigError, MissingArtifactError
    from .config import load_config
    from .experiments import COMMANDS, write_run_info

    try:
        cfg = load_config(args.config, args.seed)
        out = resolve_out(cfg.output_dir, args.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        result = COMMANDS[args.subcommand](cfg, out, log.info)
        write_run_info(out, args.subcommand, cfg, result, time.perf_counter() - t0)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as err:
        print(f"missing artifact: {err}", file=sys.stderr)
        return EXIT_MISSING
    for line in result.summary:
        print(line)
    if not result.ok:
        print(f"{args.subcommand}: FAILED", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def entry() -> None:
    sys.exit(main())
