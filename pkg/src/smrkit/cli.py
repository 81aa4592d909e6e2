"""Command-line entry points: transform, plan, bench.

Each subcommand reads the structured text formats documented in
docs/formats.md and writes its results under --out. Benchmarks default to
the deterministic simulator; --sockets runs the same reactors over loopback
TCP instead.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .architecture import ConfigError, parse_lsa, parse_resilience_config
from .bench import (
    BenchError,
    DEFAULT_BACKLOGS,
    DEFAULT_K,
    ordering_curve,
    report_leader_failure,
    report_ordering,
    report_overhead,
    run_leader_failure,
    run_overhead_bench,
)
from .deploy import (
    PlanError,
    emit_artifacts,
    parse_devices,
    plan_deployment,
    write_artifacts,
)
from .transform import TransformError, parse_resa, serialize_resa, setup_replication


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smrkit",
        description="Transform component architectures for replication, "
        "plan deployments, and run the built-in benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("transform", help="compute the replicated architecture")
    tr.add_argument("--lsa", required=True, help="logical architecture file")
    tr.add_argument("--config", required=True, help="resilience configuration file")
    tr.add_argument("--out", help="write the result here (default: stdout)")

    pl = sub.add_parser("plan", help="map a replicated architecture onto devices")
    pl.add_argument("--resa", required=True, help="replicated architecture file")
    pl.add_argument("--devices", required=True, help="device inventory file")
    pl.add_argument("--pin", action="append", default=[], metavar="UNIT=DEVICE",
                    help="force a unit onto a device (repeatable)")
    pl.add_argument("--key-seed", default="", help="seed for generated key material")
    pl.add_argument("--out", required=True, help="directory for emitted artifacts")

    be = sub.add_parser("bench", help="run a benchmark and write CSV + plots")
    be.add_argument("experiment", choices=["ordering", "overhead", "leader-failure"])
    mode = be.add_mutually_exclusive_group()
    mode.add_argument("--sim", dest="mode", action="store_const", const="sim",
                      help="deterministic simulator (default)")
    mode.add_argument("--sockets", dest="mode", action="store_const",
                      const="sockets", help="loopback TCP transport")
    be.set_defaults(mode="sim")
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--backlog", type=int, nargs="+", default=list(DEFAULT_BACKLOGS),
                    help="overhead: backlog sweep points")
    be.add_argument("--clients", type=int, nargs="+", default=[1, 2, 4, 8],
                    help="ordering: closed-loop client counts to sweep")
    be.add_argument("--payload", type=int, choices=[0, 1024], default=0,
                    help="ordering: request payload bytes")
    be.add_argument("--requests", type=int, default=200,
                    help="ordering: requests per client")
    be.add_argument("--k", type=int, default=DEFAULT_K,
                    help="overhead: events per sweep point")
    be.add_argument("--crash-at", type=float, default=18.0,
                    help="leader-failure: crash time in seconds")
    be.add_argument("--duration", type=float, default=30.0,
                    help="leader-failure: run length in seconds")
    be.add_argument("--rate", type=float, default=50.0,
                    help="leader-failure: request rate per second")
    be.add_argument("--crash", choices=["leader", "non-leader", "none"],
                    default="leader", help="leader-failure: which replica dies")
    be.add_argument("--out", required=True, help="directory for CSV and plots")
    return parser


def _cmd_transform(args) -> int:
    lsa = parse_lsa(Path(args.lsa).read_text())
    config = parse_resilience_config(Path(args.config).read_text())
    resa = setup_replication(lsa, config)
    text = serialize_resa(resa)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_plan(args) -> int:
    resa = parse_resa(Path(args.resa).read_text())
    devices = parse_devices(Path(args.devices).read_text())
    pins = {}
    for raw in args.pin:
        unit, sep, device = raw.partition("=")
        if not sep or not unit or not device:
            raise PlanError(f"--pin expects UNIT=DEVICE, got {raw!r}")
        pins[unit] = device
    plan = plan_deployment(resa, devices, pins=pins or None,
                           key_seed=args.key_seed.encode())
    paths = write_artifacts(emit_artifacts(plan, resa), args.out)
    for unit in sorted(plan.assignment):
        print(f"{unit} -> {plan.assignment[unit]}")
    print(f"{len(paths)} artifacts under {args.out}")
    return 0


def _cmd_bench(args) -> int:
    out = Path(args.out)
    if args.experiment == "ordering":
        points = ordering_curve(args.clients, args.payload, args.requests,
                                mode=args.mode, seed=args.seed)
        written = report_ordering(points, out)
        for p in points:
            print(f"clients={p.clients}: {p.throughput:.1f} ops/s, "
                  f"{p.latency_ms:.2f} ms")
    elif args.experiment == "overhead":
        base = run_overhead_bench(tuple(args.backlog), k=args.k,
                                  replicated=False, mode=args.mode,
                                  seed=args.seed)
        repl = run_overhead_bench(tuple(args.backlog), k=args.k,
                                  replicated=True, mode=args.mode,
                                  seed=args.seed)
        written = report_overhead(base, repl, out)
        for r in (base, repl):
            peak = max(p.throughput for p in r.points)
            print(f"{r.mode}: peak {peak:.1f} ops/s over backlogs "
                  f"{[p.backlog for p in r.points]}")
    else:
        result = run_leader_failure(rate=args.rate, t_crash_s=args.crash_at,
                                    duration_s=args.duration, seed=args.seed,
                                    crash=args.crash, mode=args.mode)
        written = report_leader_failure(result, out)
        print(f"crash={result.crash}: pre {result.pre_crash_mean:.1f} ops/s, "
              f"recovery {result.recovery_s:.2f} s, "
              f"lost {len(result.lost_ids)} of {result.sent}")
    print(f"{len(written)} files under {out}")
    return 0


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        if args.command == "transform":
            return _cmd_transform(args)
        if args.command == "plan":
            return _cmd_plan(args)
        return _cmd_bench(args)
    except (BenchError, PlanError, ConfigError, TransformError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
