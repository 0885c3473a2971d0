"""Election latency after each primary crash in the problem3 scenario.

Prints, for both modes and a range of seeds, the virtual time from each crash
to the next election win. Legacy runs show the second failover held back by
the voters' 30 s cooldown.

    python3 scripts/failover_latency.py --seeds 20
"""

from __future__ import annotations

import argparse
import statistics

from ark.scenario import load_scenario
from ark.sim import run


def latencies(mode: str, seed: int) -> list[int]:
    trace = run(load_scenario("problem3").with_mode(mode), seed, trace_messages=False).trace
    crashes = [r["t"] for r in trace if r["kind"] == "crash"]
    wins = [r["t"] for r in trace if r["kind"] == "election-won"]
    return [next((w - c for w in wins if w > c), -1) for c in crashes]


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seeds", type=int, default=10)
    args = p.parse_args()

    for mode in ("ark", "legacy"):
        rows = [latencies(mode, s) for s in range(1, args.seeds + 1)]
        for i in range(max(len(r) for r in rows)):
            xs = [r[i] for r in rows if len(r) > i and r[i] >= 0]
            missing = sum(1 for r in rows if len(r) <= i or r[i] < 0)
            if xs:
                print(f"{mode:6s} failover {i + 1}: median {statistics.median(xs):.0f} ms, "
                      f"max {max(xs)} ms, no election {missing}/{len(rows)}")
            else:
                print(f"{mode:6s} failover {i + 1}: no election in any run")


if __name__ == "__main__":
    main()
