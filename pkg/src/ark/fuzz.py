"""Random fault scenarios and a run-and-check loop.

A generated scenario has three parts:

* **chaos** (``[0, chaos)``): faults arrive with gaps drawn uniformly from
  ``fault_gap``. Each fault is picked by ``weights``: a random two- or
  three-way partition, a heal, a crash of a random running node or of the
  current primary, a restart of a random crashed node, an asymmetric link drop
  (probability 1.0 or ``lossy_probability``), or a new delay range. Client
  writes arrive at uniform times, each with Majority concern except a
  ``weak_fraction`` that ask for a single acknowledgement.
* **settle**: at ``chaos`` the network heals and every crashed node restarts.
* **final writes**: Majority writes at ``chaos + final_writes`` force every
  replica onto the newest primary's history, so logs and stores converge by
  the horizon ``chaos + settle``.

The scenario is a pure function of ``(config, seed)`` and the simulation uses
the same seed, so a failing seed replays exactly.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional, Union

from ark.checker import Report, check_all
from ark.scenario import Scenario, parse_scenario
from ark.sim import run


@dataclass(frozen=True)
class FuzzConfig:
    members: int = 5
    mode: str = "ark"
    chaos: int = 60_000
    settle: int = 45_000
    final_writes: tuple[int, ...] = (25_000, 30_000, 35_000)
    writes: tuple[int, int] = (10, 16)  # Majority writes during chaos, inclusive range
    weak_fraction: float = 0.2
    fault_gap: tuple[int, int] = (1_000, 6_000)
    weights: dict[str, float] = field(
        default_factory=lambda: {
            "partition": 3.0,
            "heal": 2.0,
            "crash": 2.0,
            "crash_primary": 1.0,
            "restart": 2.0,
            "drop": 1.0,
            "delay": 0.5,
        }
    )
    lossy_probability: float = 0.3
    delays: tuple[tuple[int, int], ...] = ((5, 50), (5, 200), (50, 500))
    keys: tuple[str, ...] = ("a", "b", "c", "d")
    delete_fraction: float = 0.1
    write_timeout: int = 10_000

    def __post_init__(self) -> None:
        if self.members < 1:
            raise ValueError("members must be positive")
        if self.mode not in ("ark", "legacy"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 <= self.writes[0] <= self.writes[1]:
            raise ValueError("writes must be an ordered non-negative range")
        if any(t >= self.settle for t in self.final_writes):
            raise ValueError("final writes must land before the horizon")
        unknown = set(self.weights) - {
            "partition", "heal", "crash", "crash_primary", "restart", "drop", "delay"
        }
        if unknown:
            raise ValueError(f"unknown fault weights: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FuzzConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown fuzz config keys: {sorted(unknown)}")
        kw = dict(data)
        for k in ("final_writes", "writes", "fault_gap", "keys"):
            if k in kw:
                kw[k] = tuple(kw[k])
        if "delays" in kw:
            kw["delays"] = tuple(tuple(d) for d in kw["delays"])
        return cls(**kw)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FuzzConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _partition(rng: random.Random, members: list[int]) -> list[list[int]]:
    nodes = members[:]
    rng.shuffle(nodes)
    k = 3 if len(nodes) >= 3 and rng.random() < 0.25 else 2
    cuts = sorted(rng.sample(range(1, len(nodes)), k - 1))
    bounds = [0, *cuts, len(nodes)]
    return [sorted(nodes[a:b]) for a, b in zip(bounds, bounds[1:])]


def generate_scenario(cfg: FuzzConfig, seed: int) -> Scenario:
    rng = random.Random(f"fuzz:{seed}")
    members = list(range(cfg.members))
    faults: list[dict[str, Any]] = [{"at": 0, "step_up": rng.choice(members)}]
    down: set[int] = set()
    kinds = list(cfg.weights)
    weights = [cfg.weights[k] for k in kinds]

    t = rng.randint(*cfg.fault_gap)
    while t < cfg.chaos:
        kind = rng.choices(kinds, weights)[0]
        if kind == "partition" and cfg.members > 1:
            faults.append({"at": t, "partition": _partition(rng, members)})
        elif kind == "heal":
            faults.append({"at": t, "heal": True})
        elif kind == "crash" and len(down) < cfg.members:
            n = rng.choice([m for m in members if m not in down])
            down.add(n)
            faults.append({"at": t, "crash": n})
        elif kind == "crash_primary":
            # the victim is decided at run time; a later crash or restart of
            # the same node is skipped by the simulator if it no longer applies
            faults.append({"at": t, "crash": "primary"})
        elif kind == "restart" and down:
            n = rng.choice(sorted(down))
            down.discard(n)
            faults.append({"at": t, "restart": n})
        elif kind == "drop" and cfg.members > 1:
            a, b = rng.sample(members, 2)
            p = 1.0 if rng.random() < 0.7 else cfg.lossy_probability
            faults.append({"at": t, "drop": [[a, b]], "probability": p})
        elif kind == "delay":
            faults.append({"at": t, "delay": list(rng.choice(cfg.delays))})
        t += rng.randint(*cfg.fault_gap)

    faults.append({"at": cfg.chaos, "heal": True})
    faults.append({"at": cfg.chaos, "delay": list(cfg.delays[0])})
    faults.append({"at": cfg.chaos, "restart": "all"})

    def op(i: int) -> dict[str, Any]:
        w: dict[str, Any] = {"id": f"w{i}", "key": rng.choice(cfg.keys), "timeout": cfg.write_timeout}
        if rng.random() >= cfg.delete_fraction:
            w["value"] = f"v{i}"
        return w

    writes = []
    n_majority = rng.randint(*cfg.writes)
    n_weak = round(n_majority * cfg.weak_fraction / max(1e-9, 1 - cfg.weak_fraction))
    concerns = ["majority"] * n_majority + [1] * n_weak
    rng.shuffle(concerns)
    times = sorted(rng.randint(1, cfg.chaos - 1) for _ in concerns)
    for i, (at, wc) in enumerate(zip(times, concerns)):
        writes.append({"at": at, "wc": wc, **op(i)})
    for j, dt in enumerate(cfg.final_writes):
        writes.append({"at": cfg.chaos + dt, "wc": "majority", **op(len(concerns) + j)})

    return parse_scenario(
        {
            "name": f"fuzz-{seed}",
            "description": "generated by ark.fuzz",
            "config": {"members": cfg.members, "mode": cfg.mode},
            "network": {"delay": list(cfg.delays[0])},
            "horizon": cfg.chaos + cfg.settle,
            "faults": faults,
            "writes": writes,
            "extra": {"fuzz_seed": seed, "fuzz_config": cfg.to_dict()},
        }
    )


@dataclass
class FuzzOutcome:
    seed: int
    scenario: Scenario
    report: Report
    summary: dict[str, int]
    error: Optional[str] = None
    election_terms: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None and self.report.ok


def run_one(cfg: FuzzConfig, seed: int) -> FuzzOutcome:
    sc = generate_scenario(cfg, seed)
    try:
        res = run(sc, seed, trace_messages=False)
    except Exception as exc:  # an internal invariant tripped; report it as a failure
        return FuzzOutcome(seed, sc, Report(), {}, error=f"{type(exc).__name__}: {exc}")
    terms = [r["term"] for r in res.trace if r["kind"] == "election-won"]
    return FuzzOutcome(seed, sc, check_all(res.trace), res.summary(), election_terms=terms)


@dataclass
class FuzzReport:
    iterations: int
    failures: list[FuzzOutcome]
    totals: dict[str, int]
    elapsed: float

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def failing_seeds(self) -> list[int]:
        return [o.seed for o in self.failures]


def fuzz(
    cfg: FuzzConfig,
    iterations: int,
    base_seed: int = 0,
    on_outcome: Optional[Callable[[FuzzOutcome], None]] = None,
) -> FuzzReport:
    start = time.perf_counter()
    failures = []
    totals: dict[str, int] = {}
    for i in range(iterations):
        out = run_one(cfg, base_seed + i)
        for k, v in out.summary.items():
            totals[k] = totals.get(k, 0) + v
        if not out.ok:
            failures.append(out)
        if on_outcome is not None:
            on_outcome(out)
    return FuzzReport(iterations, failures, totals, time.perf_counter() - start)
