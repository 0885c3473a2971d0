from __future__ import annotations

import random
from typing import Any, Optional

import pytest

from ark.core import GTID, ReplicaSetConfig
from ark.messages import SpeculativeReply, VoteReply
from ark.oplog import OplogEntry
from ark.protocol import DurableState, ReplicaNode, Role
from ark.scenario import parse_scenario
from ark.statemachine import KvOp, KvStore


def cfg(n: int = 5, mode: str = "ark", **kw: Any) -> ReplicaSetConfig:
    return ReplicaSetConfig.from_dict({"members": n, "mode": mode, **kw})


def disk_with(gtids: list[tuple[int, int]], max_voted: int = 0) -> DurableState:
    """A durable state whose oplog holds ``set k<i> = v<i>`` at each GTID."""
    d = DurableState(max_voted=max_voted)
    store = KvStore()
    for i, (t, o) in enumerate(gtids):
        op = KvOp.set(f"k{i}", f"v{i}")
        d.oplog.append(OplogEntry(GTID(t, o), op, store.apply(op), f"c{i}"))
    return d


def make_node(
    node_id: int = 0,
    config: Optional[ReplicaSetConfig] = None,
    gtids: Optional[list[tuple[int, int]]] = None,
    max_voted: int = 0,
    now: int = 0,
) -> ReplicaNode:
    config = config or cfg()
    return ReplicaNode(node_id, config, disk_with(gtids or [], max_voted), now, random.Random(7))


def elect(node: ReplicaNode, now: int = 0, peer_max_voted: int = 0) -> int:
    """Drive ``node`` through a unanimous two-phase election; returns the won term."""
    assert node.step_up(now)
    attempt = node.election.attempt
    for p in node.peers:
        node.on_speculative_reply(
            SpeculativeReply(p, attempt, False, "", peer_max_voted, node.last_gtid), now
        )
    e = node.election
    assert e is not None and e.phase == "authoritative", node.events
    for p in node.peers:
        node.on_vote_reply(VoteReply(p, attempt, e.term, "yes"), now)
    assert node.role is Role.PRIMARY
    node.outbox.clear()
    return node.term


def kinds(node: ReplicaNode) -> list[str]:
    return [k for k, _ in node.events]


def scenario(**kw: Any):
    data = {
        "config": {"members": 3},
        "horizon": 10000,
        "faults": [],
        "writes": [],
    }
    data.update(kw)
    return parse_scenario(data)


@pytest.fixture
def five() -> ReplicaSetConfig:
    return cfg()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
