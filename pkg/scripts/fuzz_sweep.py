"""Fuzz both protocol modes over the same seeds and compare failure rates.

    python3 scripts/fuzz_sweep.py --iterations 200
    python3 scripts/fuzz_sweep.py --config scripts/configs/legacy_long.json --modes legacy
"""

from __future__ import annotations

import argparse
from collections import Counter

from ark.fuzz import FuzzConfig, fuzz


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="fuzz config JSON; its mode is overridden per sweep")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--modes", nargs="+", default=["ark", "legacy"], choices=["ark", "legacy"])
    args = p.parse_args()

    base = FuzzConfig.load(args.config) if args.config else FuzzConfig()
    for mode in args.modes:
        cfg = FuzzConfig.from_dict({**base.to_dict(), "mode": mode})
        rep = fuzz(cfg, args.iterations, args.base_seed)
        by_check = Counter(c for o in rep.failures for c in (o.report.failing_checks() or ["error"]))
        t = rep.totals
        print(
            f"{mode:6s} {len(rep.failures):4d}/{rep.iterations} failing "
            f"({len(rep.failures) / max(1, rep.iterations):.1%}) "
            f"elections={t.get('elections', 0)} rollbacks={t.get('rollbacks', 0)} "
            f"writes_satisfied={t.get('writes_satisfied', 0)} in {rep.elapsed:.1f}s"
        )
        for check, n in by_check.most_common():
            print(f"    {check:28s} {n}")
        if rep.failures:
            print(f"    seeds: {' '.join(map(str, rep.failing_seeds[:20]))}")


if __name__ == "__main__":
    main()
