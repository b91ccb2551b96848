"""Command line entry point: ``rmrlab {simulate,modelcheck,bench,stress,replay}``.

Exit codes: 0 pass, 1 violation, 2 budget exhausted or bad configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness.experiment import ExperimentConfig, describe, replay_trace, run_random
from .harness.modelcheck import model_check, replay_witness
from .harness.native import StressConfig, stress_native
from .harness.report import emit_report
from .sim import ConfigurationError, Trace
from .words import encode

EXIT = {"pass": 0, "violation": 1, "budget_exhausted": 2}


def _print(obj) -> None:
    print(json.dumps(encode(obj), sort_keys=True, ensure_ascii=False))


def cmd_simulate(args) -> int:
    config = ExperimentConfig.load(args.config)
    report = run_random(config)
    if args.trace:
        Path(args.trace).write_text(report.trace.to_jsonl())
    if args.out:
        emit_report(report, args.format, args.out)
    print(describe(report))
    return EXIT[report.status]


def cmd_modelcheck(args) -> int:
    config = ExperimentConfig.load(args.config)
    verdict = model_check(config, abort_budget=args.abort_budget, max_states=args.max_states)
    out = {"status": verdict.status, "kind": verdict.kind, "detail": verdict.detail, "stats": verdict.stats}
    if verdict.witness is not None:
        out["witness_length"] = len(verdict.witness)
        if args.witness:
            Path(args.witness).write_text(json.dumps([list(t) for t in verdict.witness]))
        if args.trace and verdict.kind != "deadlock":
            Path(args.trace).write_text(replay_witness(config, verdict.witness).trace.to_jsonl())
    _print(out)
    return EXIT[verdict.status]


def cmd_bench(args) -> int:
    objects = {"tree": "tree_lock", "node": "node_lock"}
    config = ExperimentConfig(
        object=objects[args.object],
        size=args.n,
        delta=args.delta,
        processes=args.procs,
        passages=args.passages,
        scheduler={"kind": args.scheduler, "seed": args.seed},
        aborts={"kind": "per_await_probability", "p": args.abort_p, "seed": args.seed} if args.abort_p else {"kind": "never"},
        seed=args.seed,
        step_budget=args.step_budget,
    )
    report = run_random(config, keep_trace=False)
    fmt = "json_lines" if args.format == "json" else "csv"
    emit_report(report, fmt, args.out)
    print(describe(report))
    return EXIT[report.status]


def cmd_stress(args) -> int:
    verdict = stress_native(StressConfig(
        object="tree_lock" if args.object == "tree" else "node_lock",
        threads=args.threads,
        passages=args.passages,
        size=args.n,
        delta=args.delta,
        abort_probability=args.abort_p,
        seed=args.seed,
        faults=tuple(args.fault),
        stall_seconds=args.stall_seconds,
    ))
    _print({"status": verdict.status, "kind": verdict.kind, "detail": verdict.detail,
            "witness": verdict.witness, "stats": verdict.stats})
    return EXIT[verdict.status]


def cmd_replay(args) -> int:
    trace = Trace.from_jsonl(Path(args.trace).read_text())
    report, identical = replay_trace(trace)
    summary = report.summary()
    summary["identical"] = identical
    _print(summary)
    if not identical:
        print("replay diverged from the recorded trace", file=sys.stderr)
        return 2
    return EXIT[report.status]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmrlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="one randomized run from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--trace", help="write the event trace (JSONL) here")
    s.add_argument("--out", help="write a per-passage report here")
    s.add_argument("--format", choices=("csv", "json_lines"), default="json_lines")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("modelcheck", help="exhaustive exploration of a small config")
    s.add_argument("--config", required=True)
    s.add_argument("--abort-budget", type=int, default=0, help="abort signals the checker may inject")
    s.add_argument("--max-states", type=int, default=2_000_000)
    s.add_argument("--witness", help="write the violating choice sequence (JSON) here")
    s.add_argument("--trace", help="write the replayed witness trace (JSONL) here")
    s.set_defaults(func=cmd_modelcheck)

    s = sub.add_parser("bench", help="RMR measurements under a random scheduler")
    s.add_argument("--object", choices=("tree", "node"), default="tree")
    s.add_argument("--n", type=int, required=True, help="leaves (tree) or pseudo-IDs (node)")
    s.add_argument("--delta", type=int)
    s.add_argument("--procs", type=int, required=True)
    s.add_argument("--passages", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scheduler", default="uniform_random",
                   choices=("uniform_random", "round_robin", "longest_waiting_first", "invalidation_greedy"))
    s.add_argument("--abort-p", type=float, default=0.0)
    s.add_argument("--step-budget", type=int, default=10_000_000)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("stress", help="run the lock on OS threads")
    s.add_argument("--threads", type=int, default=8)
    s.add_argument("--passages", type=int, default=10_000)
    s.add_argument("--object", choices=("tree", "node"), default="tree")
    s.add_argument("--n", type=int)
    s.add_argument("--delta", type=int, default=3)
    s.add_argument("--abort-p", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fault", action="append", default=[], choices=("skip_ctr_reset", "skip_deregister"))
    s.add_argument("--stall-seconds", type=float, default=10.0)
    s.set_defaults(func=cmd_stress)

    s = sub.add_parser("replay", help="re-run a recorded trace and compare")
    s.add_argument("--trace", required=True)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, TypeError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"rmrlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
