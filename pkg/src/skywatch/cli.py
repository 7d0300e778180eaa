"""Command line entry points: run, replay, serve."""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import sys
from dataclasses import replace

from .runner import InvalidConfig, ReplayError, load_config_file, replay, run_scenario

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_REPLAY_ERROR = 3


def _setup_logging():
    level = os.environ.get("SKYWATCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _write_report(report, out_path: str | None):
    text = report.to_json()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    else:
        print(text)
    logging.getLogger("skywatch").info("wall clock %.3f s", report.wall_clock_s)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skywatch")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario headless")
    run_p.add_argument("scenario")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None, help="write metrics JSON here")
    run_p.add_argument("--trace", default=None, help="write a JSONL trace here")
    run_p.add_argument("--full-frames", action="store_true")

    replay_p = sub.add_parser("replay", help="recompute metrics from a trace")
    replay_p.add_argument("trace")
    replay_p.add_argument("--out", default=None)

    serve_p = sub.add_parser("serve", help="serve the operator gateway")
    serve_p.add_argument("--scenario", required=True)
    serve_p.add_argument("--port", type=int, default=8713)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--time-scale", type=float, default=1.0)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)

    if args.command == "run":
        try:
            cfg = load_config_file(args.scenario)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            report = run_scenario(cfg, trace_path=args.trace, full_frames=args.full_frames)
        except InvalidConfig as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return EXIT_INVALID_CONFIG
        _write_report(report, args.out)
        return EXIT_OK

    if args.command == "replay":
        try:
            report = replay(args.trace)
        except ReplayError as exc:
            print(f"replay failed: {exc}", file=sys.stderr)
            return EXIT_REPLAY_ERROR
        _write_report(report, args.out)
        return EXIT_OK

    if args.command == "serve":
        from .gateway import serve

        try:
            cfg = load_config_file(args.scenario)
        except InvalidConfig as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return EXIT_INVALID_CONFIG
        try:
            asyncio.run(serve(cfg, host=args.host, port=args.port, time_scale=args.time_scale))
        except KeyboardInterrupt:
            pass
        return EXIT_OK

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
