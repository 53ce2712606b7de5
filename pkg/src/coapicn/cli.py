"""Command line: ``run`` one scenario, ``compare`` two CSV reports."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .metrics import ScenarioMismatch, compare, comparison_csv, format_comparison, to_csv
from .nap.handler import Mode
from .scenario import ParseError, ValidationError, load_scenario
from .sim import RuntimeInvariantViolation, run

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coapicn", description="CoAP over a pub/sub ICN fabric, simulated.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log NAP warnings to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario", type=Path)
    p.add_argument("--mode", choices=[m.value for m in Mode], help="override run.mode from the file")
    p.add_argument("--seed", type=int, help="override run.seed from the file")
    p.add_argument("--csv", type=Path, help="write the metrics report here")
    p.add_argument("--log", type=Path, help="write the event log here")

    c = sub.add_parser("compare", help="compare two metrics CSVs of the same scenario")
    c.add_argument("csv_a", type=Path)
    c.add_argument("csv_b", type=Path)
    c.add_argument("--csv", type=Path, help="also write the comparison as CSV")
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_scenario(args.scenario)
    except (ParseError, ValidationError) as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.mode:
        cfg = cfg.with_mode(Mode(args.mode))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    try:
        result = run(cfg)
    except RuntimeInvariantViolation as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVARIANT
    rep = result.report
    if args.csv:
        args.csv.write_text(to_csv(rep))
    if args.log:
        args.log.write_text(result.log_text)
    print(f"scenario {cfg.name} mode={rep.mode} seed={rep.seed}")
    print(f"  fabric messages   {rep.fabric_messages}")
    print(f"  request messages  {rep.request_messages}")
    print(f"  response messages {rep.response_messages}")
    print(f"  server requests   {sum(rep.server_requests.values())}")
    print(f"  responses to clients {sum(len(v) for v in rep.client_latencies.values())}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        rows, savings = compare(args.csv_a, args.csv_b)
    except ScenarioMismatch as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"cannot read report: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(format_comparison(rows, savings, (args.csv_a.stem, args.csv_b.stem)))
    if args.csv:
        args.csv.write_text(comparison_csv(rows, savings))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.CRITICAL, format="%(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return cmd_compare(args)


if __name__ == "__main__":
    sys.exit(main())
