"""Command line: ``interbench run|replay|report|validate``.

Exit codes: 0 success, 1 config or input error, 2 infrastructure failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .episode import SchemaError
from .report import replay
from .runner import RunDirectoryError, build_report, execute

EXIT_OK, EXIT_CONFIG, EXIT_INFRA = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interbench", description="Interactive evaluation runs for language agents.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a run config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="run directory (overrides output_dir)")
    run.add_argument("--parallel", type=int, help="worker count (overrides parallelism)")
    run.add_argument("--seed-override", type=int, help="replace the config's run seed")

    val = sub.add_parser("validate", help="check a run config and list every problem")
    val.add_argument("--config", required=True, type=Path)
    val.add_argument("--seed-override", type=int)

    rep = sub.add_parser("replay", help="render a transcript, hand history, or match file")
    rep.add_argument("path", type=Path)

    agg = sub.add_parser("report", help="recompute the aggregate report of a run directory")
    agg.add_argument("run_dir", type=Path)
    agg.add_argument("--out", type=Path, help="write aggregate.json/csv here instead of printing JSON")
    return p


def _config_errors(exc: ConfigError) -> int:
    print("config error:", file=sys.stderr)
    for v in exc.violations:
        print(f"  - {v}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command in ("run", "validate"):
        try:
            config = load_config(args.config, seed_override=args.seed_override)
        except ConfigError as exc:
            return _config_errors(exc)
        if args.command == "validate":
            print(f"ok: task={config.task} agents={len(config.agents)} config_hash={config.config_hash()}")
            return EXIT_OK
        if args.parallel is not None and args.parallel < 1:
            print("--parallel must be a positive integer", file=sys.stderr)
            return EXIT_CONFIG
        try:
            result = execute(config, out=args.out, parallelism=args.parallel)
        except RunDirectoryError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        if result.exit_code:
            print(f"aborted: {len(result.failed)} failed unit(s), {len(result.skipped)} skipped; "
                  f"see {result.path / 'manifest.json'}", file=sys.stderr)
        else:
            print(result.path)
        return result.exit_code

    if args.command == "replay":
        try:
            sys.stdout.write(replay(args.path))
        except SchemaError as exc:
            print(f"{args.path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    # report
    try:
        report = build_report(args.run_dir)
    except ConfigError as exc:
        return _config_errors(exc)
    except (RunDirectoryError, OSError, ValueError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for path in report.write(args.out):
            print(path)
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
