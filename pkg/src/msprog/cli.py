"""Command-line driver: ``msprog <command> --config <path> [options]``.

Exit codes: 0 success, 2 config error, 3 data error, 4 internal error.
Set MSPROG_LOG to error/warn/info/debug to tune logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .evaluation import TooFewSubjectsError
from .ingest import IngestError
from .pipeline import STAGES, ConfigError
from .subject import InvalidSubjectError, MalformedRecordError, SchemaVersionError

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}

DATA_ERRORS = (IngestError, MalformedRecordError, SchemaVersionError,
               InvalidSubjectError, TooFewSubjectsError, FileNotFoundError)


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("MSPROG_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msprog",
        description="Longitudinal MS POM pipeline: generate, ingest, label, "
                    "featurize, train, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config for the stage")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel fold/grid workers")
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    stage = STAGES[args.command]
    try:
        result = stage(args.config, args.out, seed=args.seed, jobs=args.jobs)
    except ConfigError as exc:
        return _fail(2, "config_error", str(exc))
    except DATA_ERRORS as exc:
        return _fail(3, "data_error", str(exc))
    except Exception as exc:  # pragma: no cover - internal faults
        logging.getLogger("msprog").exception("internal error")
        return _fail(4, "internal_error", f"{type(exc).__name__}: {exc}")
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
