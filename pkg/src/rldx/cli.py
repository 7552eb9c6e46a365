"""Command-line front end: check, watch, inject, bench, schema.

Exit status contract: 0 = clean (no warning/critical diagnoses), 2 = one or
more diagnoses fired, 1 = operational error (unreadable input, parse
failure, bad arguments).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from rldx.engine import CheckConfig, Report, Session
from rldx.events import (
    OrderingError,
    ParseError,
    RunEnd,
    SCHEMA_TEXT,
    TraceError,
    format_real,
    parse_event,
    serialize_event,
)
from rldx.testbed import FAULTS, expected_diagnoses, run_training, validate_faults

EXIT_CLEAN = 0
EXIT_ERROR = 1
EXIT_DIAGNOSED = 2


def _load_config(path: str | None, quiet: bool) -> CheckConfig:
    path = path or os.environ.get("RLDX_CONFIG")
    if not path:
        return CheckConfig()
    config = CheckConfig.from_file(path)
    if not quiet:
        print(f"loaded configuration from {path}", file=sys.stderr)
    return config


def _emit(diag, quiet: bool) -> None:
    if quiet:
        return
    print(
        f"[{diag.severity}] {diag.diagnostic_id} "
        f"({diag.scope.kind} {diag.scope.start}..{diag.scope.end}): {diag.message}",
        file=sys.stderr,
    )


def _csv_real(v: float) -> str:
    return format_real(v).strip('"')  # sentinel strings lose their JSON quotes


def _write_outputs(report: Report, report_path, series_dir, quiet: bool) -> None:
    if report_path:
        Path(report_path).write_bytes(report.to_json().encode("utf-8"))
    if series_dir:
        out = Path(series_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("eu", "reward_std", "kl"):
            rows = report.monitor_series[name]
            lines = ["index,value"]
            lines += [f"{i},{_csv_real(v)}" for i, v in rows]
            (out / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if not quiet:
        s = report.summary
        print(
            f"{report.run_id}: {s['episodes_seen']} episodes, {s['updates_seen']} updates, "
            f"{s['diagnoses']} diagnoses, {s['notes']} notes"
        )


def _replay_stream(path: str, config: CheckConfig, quiet: bool, live: bool):
    """Shared check/watch pipeline; returns (report, status)."""
    session = Session(config)
    n_events = 0
    status = EXIT_CLEAN
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = parse_event(line)
                n_events += 1
                for diag in session.ingest(event):
                    if live:
                        _emit(diag, quiet)
    except FileNotFoundError:
        print(f"error: no such trace: {path}", file=sys.stderr)
        return None, EXIT_ERROR
    except (TraceError, OrderingError) as e:
        print(f"error: broken stream after {n_events} events: {e}", file=sys.stderr)
        status = EXIT_ERROR
    if n_events == 0:
        print("error: empty stream", file=sys.stderr)
        return None, EXIT_ERROR
    if session.meta is None:
        print("error: stream carries no RunStart", file=sys.stderr)
        return None, EXIT_ERROR
    report = session.finalize()
    if not live:
        for diag in report.diagnoses + report.notes:
            _emit(diag, quiet)
    if status == EXIT_CLEAN and report.diagnoses:
        status = EXIT_DIAGNOSED
    return report, status


def cmd_check(args) -> int:
    try:
        config = _load_config(args.config, args.quiet)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    report, status = _replay_stream(args.trace, config, args.quiet, live=False)
    if report is not None:
        _write_outputs(report, args.report, args.series_dir, args.quiet)
    return status


def cmd_watch(args) -> int:
    try:
        config = _load_config(args.config, args.quiet)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    report, status = _replay_stream(args.pipe, config, args.quiet, live=True)
    if report is not None:
        _write_outputs(report, args.report, args.series_dir, args.quiet)
    return status


def cmd_inject(args) -> int:
    try:
        faults = validate_faults(args.fault or [])
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    expected = sorted(expected_diagnoses(faults))
    with open(args.out, "w", encoding="utf-8") as fh:
        for event in run_training(faults, seed=args.seed, episodes=args.episodes):
            fh.write(serialize_event(event))
    if not args.quiet:
        print(f"wrote trace to {args.out}")
    print("expected: " + (", ".join(expected) if expected else "(none)"))
    return EXIT_CLEAN


def run_bench(
    seed: int, episodes: int, repeats: int, config: CheckConfig | None = None
) -> dict:
    """Generation-vs-ingestion timing per the relative-overhead formula.

    Each repeat times one clean generation with events discarded (t_n) and
    one with events ingested through a full Session (t_d); the overhead is
    100 * (t_d - t_n) / t_n, averaged over repeats.  The two measurements
    alternate order across repeats so slow machine drift cancels instead of
    biasing one side.  The noise band is three standard errors of the
    per-repeat overheads (at least 1 percentage point, the practical timer
    resolution for runs this size).
    """

    def timed_generation() -> float:
        t0 = time.perf_counter()
        for _event in run_training((), seed=seed, episodes=episodes):
            pass
        return time.perf_counter() - t0

    def timed_ingestion() -> float:
        session = Session(config)
        t0 = time.perf_counter()
        for event in run_training((), seed=seed, episodes=episodes):
            session.ingest(event)
        session.finalize()
        return time.perf_counter() - t0

    timed_generation()  # warm caches before measuring
    overheads = []
    for i in range(repeats):
        if i % 2 == 0:
            t_n = timed_generation()
            t_d = timed_ingestion()
        else:
            t_d = timed_ingestion()
            t_n = timed_generation()
        overheads.append(100.0 * (t_d - t_n) / t_n)
    mean = sum(overheads) / len(overheads)
    if len(overheads) > 1:
        var = sum((x - mean) ** 2 for x in overheads) / (len(overheads) - 1)
        band = max(3.0 * (var / len(overheads)) ** 0.5, 1.0)
    else:
        band = float("inf")
    return {"overheads": overheads, "mean": mean, "noise_band": band}


def cmd_bench(args) -> int:
    try:
        config = _load_config(args.config, args.quiet)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    result = run_bench(args.seed, args.episodes, args.repeats, config)
    for i, ov in enumerate(result["overheads"]):
        print(f"repeat {i}: overhead {ov:+.2f}%")
    print(f"mean overhead: {result['mean']:+.2f}%  (noise band +/- {result['noise_band']:.2f}%)")
    if args.repeats == 1:
        print("warning: single repeat, low-confidence estimate", file=sys.stderr)
    return EXIT_CLEAN


def cmd_schema(_args) -> int:
    print(SCHEMA_TEXT, end="")
    return EXIT_CLEAN


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rldx",
        description="Fault diagnosis for deep-RL training runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="configuration file (JSON); $RLDX_CONFIG as fallback")
        p.add_argument("--report", help="write the full report (JSON) here")
        p.add_argument("--series-dir", help="write monitor series CSVs into this directory")
        p.add_argument("--quiet", action="store_true", help="suppress progress and warnings")

    p = sub.add_parser("check", help="replay a recorded trace file through the engine")
    p.add_argument("trace", help="trace file in the wire format")
    common(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("watch", help="ingest a live stream, printing diagnoses as they fire")
    p.add_argument("pipe", help="pipe or file to read wire-format records from")
    common(p)
    p.set_defaults(fn=cmd_watch)

    p = sub.add_parser("inject", help="generate a testbed trace with injected faults")
    p.add_argument("out", help="output trace path")
    p.add_argument("--fault", action="append", metavar="NAME",
                   help=f"fault to inject, repeatable ({', '.join(sorted(FAULTS))})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=300)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_inject)

    p = sub.add_parser("bench", help="measure engine overhead on a clean testbed run")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=40)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--config", help="configuration file (JSON); $RLDX_CONFIG as fallback")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("schema", help="print the trace wire-format contract")
    p.set_defaults(fn=cmd_schema)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
