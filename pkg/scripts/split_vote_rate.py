"""How often the split_vote scenario elects a primary, and how quickly.

Runs the bundled two-candidate scenario over many seeds and reports the
fraction of runs electing a primary within the window after the crash, the
latency distribution, and how often both candidates won a term.

    python3 scripts/split_vote_rate.py --runs 1000
"""

from __future__ import annotations

import argparse
import statistics

from ark.scenario import load_scenario
from ark.sim import run


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--window", type=int, default=60_000, help="virtual ms allowed after the crash")
    p.add_argument("--mode", choices=["ark", "legacy"], default="ark")
    args = p.parse_args()

    sc = load_scenario("split_vote").with_mode(args.mode)
    crash_at = next(f.at for f in sc.faults if f.kind == "crash")
    latencies, multi = [], 0
    for seed in range(args.runs):
        trace = run(sc, seed, trace_messages=False).trace
        wins = [r for r in trace if r["kind"] == "election-won" and r["t"] > crash_at]
        if wins and wins[0]["t"] - crash_at <= args.window:
            latencies.append(wins[0]["t"] - crash_at)
        multi += len({w["term"] for w in wins}) >= 2

    print(f"mode={args.mode} runs={args.runs}")
    print(f"elected within {args.window} ms: {len(latencies)}/{args.runs} ({len(latencies) / args.runs:.2%})")
    if latencies:
        q = statistics.quantiles(latencies, n=20) if len(latencies) > 1 else latencies * 19
        print(f"latency ms: min={min(latencies)} median={statistics.median(latencies):.0f} "
              f"p95={q[18]:.0f} max={max(latencies)}")
    print(f"runs where more than one term was won: {multi}")


if __name__ == "__main__":
    main()
