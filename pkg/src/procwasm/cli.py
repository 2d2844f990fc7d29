"""Command-line front end.

Subcommands:

  run       execute a command file for n iterations and persist records
  validate  compare an actual output tree against an expected one
  report    render a run directory's records as Markdown or CSV
  fixtures  inspect the bundled guest programs

Exit codes: 0 success (and validation passed), 1 a benchmark or
validation failed, 2 harness error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ProcwasmError, ZeroDuration
from .guest_exec import ShimConfig
from .harness import (RunRecord, archive_results, overhead_percent,
                      parse_command_file, repeat_benchmark, validate_outputs)
from .harness.validate import MISSING, PASS
from .fixtures import fixture_names, load_fixture, manifest_entries
from .stats_report import mean_stderr

RECORDS_NAME = "records.json"


def _cmd_run(args) -> int:
    cf = parse_command_file(Path(args.cmdfile).read_text())
    out_dir = Path(args.out).resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    config = ShimConfig(aux_capacity=args.aux_capacity)
    records = repeat_benchmark(
        cf, fs_image=args.fsimage, n=args.iterations,
        provider=args.counters, shim_config=config, export_to=out_dir)
    try:
        overhead = overhead_percent(records)
    except ZeroDuration:
        overhead = None
    payload = {
        "meta": {
            "cmdfile": str(args.cmdfile),
            "iterations": args.iterations,
            "counters": args.counters,
            "aux_capacity": args.aux_capacity,
            "overhead_percent": overhead,
        },
        "records": [r.to_dict() for r in records],
    }
    (out_dir / RECORDS_NAME).write_text(json.dumps(payload, indent=2) + "\n")
    if args.archive:
        tar_path = out_dir.with_name(out_dir.name + ".tar")
        tar_path.write_bytes(archive_results(out_dir))
        print(f"archive: {tar_path}")
    by_bench: dict[str, list[RunRecord]] = {}
    for r in records:
        by_bench.setdefault(r.benchmark, []).append(r)
    for name in sorted(by_bench):
        group = by_bench[name]
        ok = sum(1 for r in group if r.ok)
        mean, _ = mean_stderr([r.wall_ms for r in group])
        print(f"{name}: {ok}/{len(group)} ok, mean wall {mean:.3f} ms")
    if overhead is not None:
        print(f"kernel overhead: {overhead:.4f}% of wall time")
    return 0 if all(r.ok for r in records) else 1


def _cmd_validate(args) -> int:
    expected = Path(args.expected)
    if not expected.is_dir():
        print(f"error: expected tree {expected} is not a directory",
              file=sys.stderr)
        return 2
    report = validate_outputs(expected, Path(args.actual))
    for path in sorted(report.results):
        res = report.results[path]
        line = f"{res.status:7s} {path}"
        if res.offset is not None:
            line += f" (first difference at byte {res.offset})"
        print(line)
    n = len(report.results)
    failed = len(report.failures())
    print(f"{n - failed}/{n} files match")
    return 0 if report.passed else 1


def _load_records(out_dir: Path) -> tuple[dict, list[RunRecord]]:
    path = out_dir / RECORDS_NAME
    payload = json.loads(path.read_text())
    return payload["meta"], [RunRecord.from_dict(d)
                             for d in payload["records"]]


def _report_rows(records) -> list[dict]:
    by_bench: dict[str, list[RunRecord]] = {}
    for r in records:
        by_bench.setdefault(r.benchmark, []).append(r)
    rows = []
    for name in sorted(by_bench):
        group = by_bench[name]
        wall_mean, wall_se = mean_stderr([r.wall_ms for r in group])
        kern_mean, kern_se = mean_stderr([r.kernel_ms for r in group])
        rows.append({
            "benchmark": name,
            "runs": len(group),
            "failures": sum(1 for r in group if not r.ok),
            "wall": (wall_mean, wall_se),
            "kernel": (kern_mean, kern_se),
        })
    return rows


def _counter_rows(records) -> list[tuple[str, str, float]]:
    acc: dict[tuple[str, str], list[float]] = {}
    for r in records:
        for event, value in r.counters.values.items():
            acc.setdefault((r.benchmark, event), []).append(float(value))
    return [(bench, event, mean_stderr(vals)[0])
            for (bench, event), vals in sorted(acc.items())]


def _cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    meta, records = _load_records(out_dir)
    if not records:
        print("error: run directory holds no records", file=sys.stderr)
        return 2
    rows = _report_rows(records)
    try:
        overhead = overhead_percent(records)
    except ZeroDuration:
        overhead = None
    if args.format == "csv":
        print("benchmark,runs,failures,mean_wall_ms,stderr_wall_ms,"
              "mean_kernel_ms,stderr_kernel_ms")
        for row in rows:
            wall, kernel = row["wall"], row["kernel"]
            print(f"{row['benchmark']},{row['runs']},{row['failures']},"
                  f"{wall[0]:.6g},{wall[1]:.6g},"
                  f"{kernel[0]:.6g},{kernel[1]:.6g}")
        return 0
    print("| Benchmark | wall (ms) | kernel (ms) | runs | failures |")
    print("|---|---|---|---|---|")
    for row in rows:
        wall, kernel = row["wall"], row["kernel"]
        print(f"| {row['benchmark']} | {wall[0]:.6g} ± {wall[1]:.6g} "
              f"| {kernel[0]:.6g} ± {kernel[1]:.6g} "
              f"| {row['runs']} | {row['failures']} |")
    if overhead is not None:
        print(f"\nKernel overhead: {overhead:.4f}% of wall time "
              f"(counters: {meta.get('counters', 'unknown')}).")
    counters = _counter_rows(records)
    if counters:
        print("\n| Benchmark | Event | mean count |")
        print("|---|---|---|")
        for bench, event, value in counters:
            print(f"| {bench} | {event} | {value:.6g} |")
    return 0


def _cmd_fixtures(args) -> int:
    if args.action == "list":
        shas = {name: sha for name, _, sha in manifest_entries()}
        for name in fixture_names():
            data = load_fixture(name)
            print(f"{name:15s} {len(data):6d} bytes  sha256 {shas[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procwasm",
        description="Run sandboxed guest benchmarks and report on them.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a command file")
    run.add_argument("--cmdfile", required=True,
                     help="command file: out=<path> err=<path> prog args")
    run.add_argument("--fsimage", default=None,
                     help="host directory mirrored into the guest fs")
    run.add_argument("--iterations", type=int, default=5)
    run.add_argument("--counters", default="null",
                     choices=["hardware", "software", "null"])
    run.add_argument("--aux-capacity", type=int,
                     default=ShimConfig().aux_capacity,
                     help="auxiliary buffer size in bytes")
    run.add_argument("--out", required=True,
                     help="directory for records and exported results")
    run.add_argument("--archive", action="store_true",
                     help="also write a ustar archive next to --out")
    run.set_defaults(func=_cmd_run)

    val = sub.add_parser("validate", help="compare output trees")
    val.add_argument("expected")
    val.add_argument("actual")
    val.set_defaults(func=_cmd_validate)

    rep = sub.add_parser("report", help="summarize a run directory")
    rep.add_argument("out_dir")
    rep.add_argument("--format", default="md", choices=["md", "csv"])
    rep.set_defaults(func=_cmd_report)

    fix = sub.add_parser("fixtures", help="inspect bundled guest programs")
    fix.add_argument("action", choices=["list"])
    fix.set_defaults(func=_cmd_fixtures)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProcwasmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
