"""Scenario files: replica-set config, timed faults, timed client writes, horizon.

Scenarios are JSON objects::

    {
      "name": "problem1",
      "config": {"members": 5, "mode": "legacy"},
      "network": {"delay": [5, 50]},
      "client_discovery_delay": 100,
      "horizon": 45000,
      "faults": [
        {"at": 0, "step_up": 0},
        {"at": 3000, "partition": [[0], [1, 2, 3, 4]]},
        {"at": 3000, "drop": [[0, 1], [1, 0]], "probability": 1.0},
        {"at": 9000, "crash": 2},            # or "primary"
        {"at": 12000, "restart": 2},         # or "all"
        {"at": 15000, "delay": [5, 500]},
        {"at": 20000, "heal": true}
      ],
      "writes": [
        {"at": 1000, "key": "x", "value": "1", "wc": "majority", "timeout": 10000, "target": 0}
      ]
    }

``config.members`` is either a count or a list of ``{"id", "group", "electable"}``.
``wc`` is ``"majority"``, a positive integer, or a ``{group: minimum}`` mapping.
A write without ``value`` deletes the key; without ``target`` it goes to the
node the client currently believes is primary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from ark.core import ReplicaSetConfig, WriteConcern
from ark.statemachine import KvOp


class ScenarioError(ValueError):
    """The scenario is malformed; raised before any event executes."""


FAULT_KINDS = ("partition", "heal", "crash", "restart", "delay", "drop", "step_up")


@dataclass(frozen=True)
class FaultAction:
    at: int
    kind: str
    node: Union[int, str, None] = None
    groups: tuple[tuple[int, ...], ...] = ()
    link: tuple[int, int] = (0, 0)
    probability: float = 1.0
    delay: tuple[int, int] = (0, 0)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"at": self.at}
        if self.kind == "partition":
            out["partition"] = [list(g) for g in self.groups]
        elif self.kind == "heal":
            out["heal"] = True
        elif self.kind in ("crash", "restart", "step_up"):
            out[self.kind] = self.node
        elif self.kind == "delay":
            out["delay"] = list(self.delay)
        elif self.kind == "drop":
            out["drop"] = [list(self.link)]
            out["probability"] = self.probability
        return out


@dataclass(frozen=True)
class ClientWrite:
    at: int
    wid: str
    op: KvOp
    wc: WriteConcern
    timeout: int = 10000
    target: Optional[int] = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "at": self.at,
            "id": self.wid,
            "key": self.op.key,
            "wc": self.wc.to_json(),
            "timeout": self.timeout,
        }
        if self.op.value is not None:
            out["value"] = self.op.value
        if self.target is not None:
            out["target"] = self.target
        return out


@dataclass(frozen=True)
class Scenario:
    config: ReplicaSetConfig
    horizon: int
    faults: tuple[FaultAction, ...] = ()
    writes: tuple[ClientWrite, ...] = ()
    delay: tuple[int, int] = (5, 50)
    client_discovery_delay: int = 100
    name: str = "scenario"
    description: str = ""
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "config": self.config.to_dict(),
            "network": {"delay": list(self.delay)},
            "client_discovery_delay": self.client_discovery_delay,
            "horizon": self.horizon,
            "faults": [f.to_json() for f in self.faults],
            "writes": [w.to_json() for w in self.writes],
            **({"extra": self.extra} if self.extra else {}),
        }

    def with_mode(self, mode: str) -> "Scenario":
        cfg = self.config.to_dict()
        cfg["mode"] = mode
        return Scenario(
            ReplicaSetConfig.from_dict(cfg),
            self.horizon,
            self.faults,
            self.writes,
            self.delay,
            self.client_discovery_delay,
            self.name,
            self.description,
            self.extra,
        )


def _delay_pair(obj: Any, what: str) -> tuple[int, int]:
    lo, hi = (int(v) for v in obj)
    if not 0 <= lo <= hi:
        raise ScenarioError(f"{what}: bad delay range {obj!r}")
    return lo, hi


def _parse_fault(raw: dict[str, Any], members: set[int]) -> list[FaultAction]:
    at = int(raw["at"])
    kinds = [k for k in FAULT_KINDS if k in raw]
    if len(kinds) != 1:
        raise ScenarioError(f"fault at {at} must name exactly one action: {raw!r}")
    kind = kinds[0]
    value = raw[kind]
    if kind == "partition":
        groups = tuple(tuple(int(n) for n in g) for g in value)
        flat = [n for g in groups for n in g]
        if len(flat) != len(set(flat)):
            raise ScenarioError(f"partition at {at}: groups overlap")
        if set(flat) != members:
            raise ScenarioError(f"partition at {at}: groups must cover every member")
        return [FaultAction(at, kind, groups=groups)]
    if kind == "heal":
        return [FaultAction(at, kind)]
    if kind == "delay":
        return [FaultAction(at, kind, delay=_delay_pair(value, f"fault at {at}"))]
    if kind == "drop":
        p = float(raw.get("probability", 1.0))
        if not 0.0 <= p <= 1.0:
            raise ScenarioError(f"drop at {at}: probability {p} outside [0, 1]")
        out = []
        for a, b in value:
            if a not in members or b not in members or a == b:
                raise ScenarioError(f"drop at {at}: bad link {a}->{b}")
            out.append(FaultAction(at, kind, link=(int(a), int(b)), probability=p))
        return out
    # crash / restart / step_up
    special = {"crash": ("primary",), "restart": ("all",), "step_up": ()}[kind]
    if value in special:
        return [FaultAction(at, kind, node=value)]
    if isinstance(value, bool) or int(value) not in members:
        raise ScenarioError(f"{kind} at {at}: unknown node {value!r}")
    return [FaultAction(at, kind, node=int(value))]


def _check_crash_sequence(faults: list[FaultAction], members: set[int]) -> None:
    down: set[int] = set()
    maybe_down = False  # a "crash primary" could have taken any node down
    for f in faults:
        if f.kind == "crash":
            if f.node == "primary":
                maybe_down = True
            elif f.node in down:
                raise ScenarioError(f"crash at {f.at}: node {f.node} already crashed")
            else:
                down.add(f.node)  # type: ignore[arg-type]
        elif f.kind == "restart":
            if f.node == "all":
                down.clear()
                maybe_down = False
            elif f.node in down:
                down.discard(f.node)  # type: ignore[arg-type]
            elif not maybe_down:
                raise ScenarioError(f"restart at {f.at}: node {f.node} is not crashed")


def parse_scenario(data: dict[str, Any]) -> Scenario:
    try:
        config = ReplicaSetConfig.from_dict(data["config"])
        horizon = int(data["horizon"])
        if horizon <= 0:
            raise ScenarioError("horizon must be positive")
        members = set(config.member_ids)
        groups = {m.group for m in config.members}
        delay = _delay_pair(data.get("network", {}).get("delay", (5, 50)), "network")

        faults: list[FaultAction] = []
        for raw in data.get("faults", []):
            faults.extend(_parse_fault(raw, members))
        faults.sort(key=lambda f: f.at)
        _check_crash_sequence(faults, members)

        writes = []
        for i, raw in enumerate(data.get("writes", [])):
            key = str(raw["key"])
            value = raw.get("value")
            op = KvOp.set(key, str(value)) if value is not None else KvOp.delete(key)
            wc = WriteConcern.parse(raw.get("wc", 1))
            for g, _ in wc.tags:
                if g not in groups:
                    raise ScenarioError(f"write {i}: unknown group {g!r}")
            target = raw.get("target")
            if target is not None and int(target) not in members:
                raise ScenarioError(f"write {i}: unknown target {target!r}")
            writes.append(
                ClientWrite(
                    int(raw["at"]),
                    str(raw.get("id", f"w{i}")),
                    op,
                    wc,
                    int(raw.get("timeout", 10000)),
                    None if target is None else int(target),
                )
            )
        writes.sort(key=lambda w: w.at)
        if len({w.wid for w in writes}) != len(writes):
            raise ScenarioError("write ids must be unique")
        for t in [f.at for f in faults] + [w.at for w in writes]:
            if not 0 <= t <= horizon:
                raise ScenarioError(f"event time {t} outside [0, {horizon}]")
        return Scenario(
            config=config,
            horizon=horizon,
            faults=tuple(faults),
            writes=tuple(writes),
            delay=delay,
            client_discovery_delay=int(data.get("client_discovery_delay", 100)),
            name=str(data.get("name", "scenario")),
            description=str(data.get("description", "")),
            extra=dict(data.get("extra", {})),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load a scenario file; bare names resolve to the bundled scenarios."""
    p = Path(path)
    if not p.exists():
        bundled = Path(__file__).parent / "scenarios" / f"{p.stem}.json"
        if p.parent == Path(".") and bundled.exists():
            p = bundled
        else:
            raise FileNotFoundError(f"no such scenario file: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: {exc}") from exc
    return parse_scenario(data)


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "scenarios").glob("*.json"))
