"""Command-line entry point: ``ark run``, ``ark check``, ``ark fuzz``, ``ark list``.

Exit statuses: 0 ok, 1 violations (or an internal invariant failure during a
run), 2 usage, scenario or trace parse error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from ark.checker import check_all
from ark.fuzz import FuzzConfig, FuzzOutcome, fuzz
from ark.protocol import ProtocolError
from ark.scenario import ScenarioError, bundled_scenarios, load_scenario
from ark.sim import TraceParseError, read_trace, run, write_trace

EXIT_OK, EXIT_VIOLATIONS, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> None:
    print(f"ark: {msg}", file=sys.stderr)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        sc = load_scenario(args.scenario)
        if args.mode:
            sc = sc.with_mode(args.mode)
    except (OSError, ScenarioError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    try:
        res = run(sc, args.seed, trace_messages=not args.no_messages)
    except (ProtocolError, RuntimeError) as exc:
        _err(f"internal invariant failure: {exc}")
        return EXIT_VIOLATIONS
    write_trace(args.trace, res.trace)
    if args.final_state:
        Path(args.final_state).write_text(json.dumps(res.final, indent=2, sort_keys=True) + "\n")
    s = res.summary()
    print(
        f"{sc.name} seed={args.seed} mode={sc.config.mode.value}: "
        f"elections={s['elections']} writes_satisfied={s['writes_satisfied']} "
        f"writes_failed={s['writes_failed']} rollbacks={s['rollbacks']} "
        f"({s['rolled_back_entries']} entries) trace={args.trace}"
    )
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    try:
        trace = read_trace(args.trace)
    except (OSError, TraceParseError) as exc:
        _err(f"cannot read trace: {exc}")
        return EXIT_USAGE
    try:
        report = check_all(trace)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        _err(f"malformed trace record: {exc!r}")
        return EXIT_USAGE
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    if not args.quiet:
        for line in report.summary_lines():
            print(line)
    failing = report.failing_checks()
    print("ok" if report.ok else f"violations: {', '.join(failing)}")
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def cmd_fuzz(args: argparse.Namespace) -> int:
    try:
        cfg = FuzzConfig.load(args.config) if args.config else FuzzConfig()
        if args.mode:
            cfg = FuzzConfig.from_dict({**cfg.to_dict(), "mode": args.mode})
    except (OSError, ValueError, TypeError) as exc:
        _err(f"bad fuzz config: {exc}")
        return EXIT_USAGE
    out_dir = Path(args.failures_dir) if args.failures_dir else None

    def on_outcome(o: FuzzOutcome) -> None:
        if o.ok:
            return
        what = o.error or ", ".join(o.report.failing_checks())
        print(f"seed {o.seed}: FAIL ({what})")
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / f"fuzz-{o.seed}.json"
            path.write_text(json.dumps(o.scenario.to_json(), indent=2) + "\n")
            print(f"  replay: python3 -m ark run --scenario {path} --seed {o.seed} --trace fuzz-{o.seed}.trace")

    rep = fuzz(cfg, args.iterations, args.base_seed, on_outcome)
    t = rep.totals
    print(
        f"fuzz mode={cfg.mode} iterations={rep.iterations} base_seed={args.base_seed}: "
        f"{len(rep.failures)} failing; elections={t.get('elections', 0)} "
        f"writes_satisfied={t.get('writes_satisfied', 0)} rollbacks={t.get('rollbacks', 0)} "
        f"in {rep.elapsed:.1f}s"
    )
    if rep.failures:
        print(f"first failing seed: {rep.failing_seeds[0]}")
        print(f"failing seeds: {' '.join(map(str, rep.failing_seeds))}")
    return EXIT_OK if rep.ok else EXIT_VIOLATIONS


def cmd_list(args: argparse.Namespace) -> int:
    for name in bundled_scenarios():
        sc = load_scenario(name)
        print(f"{name:14s} {sc.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ark", description="Replica-set election simulator and trace checker.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write its trace")
    r.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--trace", required=True, help="output trace (JSON lines)")
    r.add_argument("--final-state", help="output final-state dump (JSON)")
    r.add_argument("--mode", choices=["ark", "legacy"], help="override the scenario's protocol mode")
    r.add_argument("--no-messages", action="store_true", help="omit per-message trace records")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="check a trace for safety violations")
    c.add_argument("--trace", required=True)
    c.add_argument("--json", help="write the machine-readable report here")
    c.add_argument("--quiet", action="store_true", help="print only the verdict line")
    c.set_defaults(func=cmd_check)

    f = sub.add_parser("fuzz", help="run and check random fault scenarios")
    f.add_argument("--config", help="fuzz config JSON (defaults built in)")
    f.add_argument("--iterations", type=int, default=100)
    f.add_argument("--base-seed", type=int, default=0)
    f.add_argument("--mode", choices=["ark", "legacy"])
    f.add_argument("--failures-dir", help="save failing scenarios here for replay")
    f.set_defaults(func=cmd_fuzz)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "iterations", 0) < 0:
        _err("--iterations must be non-negative")
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
