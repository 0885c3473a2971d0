"""Deterministic discrete-event harness for a simulated replica set.

Virtual time is in milliseconds. Events run in ``(time, seq)`` order, and every
random draw comes from generators seeded by the run seed, so a trace is a pure
function of ``(scenario, seed)``.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from ark.messages import Message, describe
from ark.protocol import DurableState, ReplicaNode, Role, gtid_json
from ark.scenario import ClientWrite, FaultAction, Scenario

DELIVER, TIMER, FAULT, CLIENT = range(4)
TRACE_FORMAT = 1
MAX_TICKS_PER_INSTANT = 10_000


@dataclass
class SimResult:
    trace: list[dict[str, Any]]
    final: dict[str, Any]
    nodes: dict[int, ReplicaNode]
    disks: dict[int, DurableState]

    def summary(self) -> dict[str, int]:
        kinds = Counter(r["kind"] for r in self.trace)
        statuses = Counter(
            r["status"] for r in self.trace if r["kind"] == "wait-completed"
        )
        rejected = sum(
            1 for r in self.trace if r["kind"] == "client-write" and r["outcome"] != "accepted"
        )
        return {
            "elections": kinds["election-won"],
            "writes_satisfied": statuses["satisfied"],
            "writes_failed": sum(statuses.values()) - statuses["satisfied"] + rejected,
            "rollbacks": kinds["rollback"],
            "rolled_back_entries": sum(
                len(r["removed"]) for r in self.trace if r["kind"] == "rollback"
            ),
        }


class Simulation:
    def __init__(self, scenario: Scenario, seed: int, trace_messages: bool = True):
        self.scenario = scenario
        self.config = scenario.config
        self.seed = seed
        self.trace_messages = trace_messages
        self.rng = random.Random(seed)
        self.now = 0
        self.seq = 0
        self.queue: list[tuple[int, int, int, Any]] = []
        self.trace: list[dict[str, Any]] = []

        self.delay = scenario.delay
        self.group_of: Optional[dict[int, int]] = None
        self.drops: dict[tuple[int, int], float] = {}

        self.disks = {m: DurableState() for m in self.config.member_ids}
        self.nodes: dict[int, ReplicaNode] = {}
        self.timer_at: dict[int, Optional[int]] = {}
        self._ticks: Counter = Counter()

        self._announcements: list[tuple[int, int, bool]] = []
        self._belief_pos = 0
        self._belief_state: dict[int, bool] = {}
        self._belief_order: list[int] = []

    # ---------------------------------------------------------------- plumbing

    def _push(self, t: int, kind: int, data: Any) -> None:
        heapq.heappush(self.queue, (t, self.seq, kind, data))
        self.seq += 1

    def _record(self, node: Optional[int], kind: str, **payload: Any) -> None:
        rec = {"t": self.now, "node": node, "kind": kind}
        rec.update(payload)
        self.trace.append(rec)
        if kind == "role-change":
            self._announcements.append((self.now, node, payload["role"] == "primary"))  # type: ignore[arg-type]

    def _node_rng(self, nid: int) -> random.Random:
        return random.Random(f"{self.seed}:{nid}:{self.disks[nid].incarnation}")

    def _start_node(self, nid: int) -> ReplicaNode:
        node = ReplicaNode(nid, self.config, self.disks[nid], self.now, self._node_rng(nid))
        self.nodes[nid] = node
        self.timer_at[nid] = None
        self._drain(node)
        return node

    def _drain(self, node: ReplicaNode) -> None:
        for kind, payload in node.events:
            self._record(node.id, kind, **payload)
        node.events.clear()
        out = node.outbox
        node.outbox = []
        for to, msg in out:
            self.deliver(msg, node.id, to)
        self._schedule_timer(node)

    def _schedule_timer(self, node: ReplicaNode) -> None:
        t = node.next_wakeup(self.now)
        cur = self.timer_at.get(node.id)
        if cur is not None and self.now <= cur <= t:
            return
        self.timer_at[node.id] = t
        self._push(t, TIMER, (node.id, node.disk.incarnation))

    def link_up(self, frm: int, to: int) -> bool:
        if self.group_of is not None and self.group_of[frm] != self.group_of[to]:
            return False
        return self.drops.get((frm, to), 0.0) < 1.0

    # ---------------------------------------------------------------- transport

    def deliver(self, msg: Message, frm: int, to: int) -> Optional[int]:
        """Schedule delivery of ``msg``; returns the arrival time, or None if dropped."""
        reason = None
        if to not in self.nodes:
            reason = "crashed"
        elif self.group_of is not None and self.group_of[frm] != self.group_of[to]:
            reason = "partition"
        else:
            p = self.drops.get((frm, to), 0.0)
            if p >= 1.0 or (p > 0.0 and self.rng.random() < p):
                reason = "drop"
        if reason is not None:
            if self.trace_messages:
                self._record(frm, "message-dropped", to=to, reason=reason, msg=describe(msg))
            return None
        at = self.now + self.rng.randint(*self.delay)
        if self.trace_messages:
            self._record(frm, "message-sent", to=to, arrive=at, msg=describe(msg))
        self._push(at, DELIVER, (frm, to, msg))
        return at

    # ---------------------------------------------------------------- faults

    def crash(self, nid: int) -> None:
        node = self.nodes.pop(nid, None)
        if node is None:
            raise RuntimeError(f"crash of node {nid} which is not running")
        for w in node.pending:
            self._record(
                nid,
                "wait-completed",
                gtid=gtid_json(w.gtid),
                client=w.client,
                wc=w.wc.to_json(),
                status="timeout",
                reason="node crashed",
            )
        self.timer_at[nid] = None
        self._record(nid, "crash", role=node.role.value, term=node.term)

    def restart(self, nid: int) -> None:
        if nid in self.nodes:
            raise RuntimeError(f"restart of node {nid} which is running")
        disk = self.disks[nid]
        self._record(
            nid,
            "restart",
            max_voted=disk.max_voted,
            log_len=len(disk.oplog),
            last=gtid_json(disk.oplog.last_gtid()),
        )
        self._start_node(nid)

    def current_primary(self) -> Optional[int]:
        best = None
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            if n.role is Role.PRIMARY and (best is None or n.term > self.nodes[best].term):
                best = nid
        return best

    def _apply_fault(self, f: FaultAction) -> None:
        if f.kind == "partition":
            self.group_of = {n: i for i, g in enumerate(f.groups) for n in g}
            self._record(None, "partition", groups=[list(g) for g in f.groups])
        elif f.kind == "heal":
            self.group_of = None
            self.drops.clear()
            self._record(None, "heal")
        elif f.kind == "drop":
            if f.probability > 0:
                self.drops[f.link] = f.probability
            else:
                self.drops.pop(f.link, None)
            self._record(None, "drop", link=list(f.link), probability=f.probability)
        elif f.kind == "delay":
            self.delay = f.delay
            self._record(None, "delay-set", delay=list(f.delay))
        elif f.kind == "crash":
            nid = self.current_primary() if f.node == "primary" else f.node
            if nid is None:
                self._record(None, "fault-skipped", fault=f.to_json(), reason="no primary")
            elif nid not in self.nodes:
                # only reachable after a "crash primary" picked this node earlier
                self._record(nid, "fault-skipped", fault=f.to_json(), reason="not running")
            else:
                self.crash(nid)  # type: ignore[arg-type]
        elif f.kind == "restart":
            targets = (
                [n for n in self.config.member_ids if n not in self.nodes]
                if f.node == "all"
                else [f.node]
            )
            for nid in targets:
                if nid in self.nodes:
                    self._record(nid, "fault-skipped", fault=f.to_json(), reason="running")
                else:
                    self.restart(nid)  # type: ignore[arg-type]
        elif f.kind == "step_up":
            node = self.nodes.get(f.node)  # type: ignore[arg-type]
            self._record(f.node, "step-up", accepted=node is not None and node.role is Role.SECONDARY)  # type: ignore[arg-type]
            if node is not None:
                node.step_up(self.now)
                self._drain(node)

    # ---------------------------------------------------------------- clients

    def believed_primary(self, at: int) -> Optional[int]:
        """The node clients consider primary at ``at``, learnt with the discovery delay."""
        horizon = at - self.scenario.client_discovery_delay
        ann = self._announcements
        while self._belief_pos < len(ann) and ann[self._belief_pos][0] <= horizon:
            _, nid, is_primary = ann[self._belief_pos]
            self._belief_state[nid] = is_primary
            if is_primary:
                if nid in self._belief_order:
                    self._belief_order.remove(nid)
                self._belief_order.append(nid)
            self._belief_pos += 1
        for nid in reversed(self._belief_order):
            if self._belief_state.get(nid):
                return nid
        return None

    def client_write(self, w: ClientWrite) -> None:
        target = w.target if w.target is not None else self.believed_primary(self.now)
        node = self.nodes.get(target) if target is not None else None
        base = {
            "client": w.wid,
            "target": target,
            "op": w.op.to_json(),
            "wc": w.wc.to_json(),
        }
        if node is None:
            reason = "no primary known" if target is None else "target crashed"
            self._record(None, "client-write", outcome="rejected", reason=reason, gtid=None, **base)
            return
        gtid = node.on_client_write(w.op, w.wc, w.wid, self.now + w.timeout, self.now)
        if gtid is None:
            self._record(None, "client-write", outcome="rejected", reason="not primary", gtid=None, **base)
        else:
            self._record(None, "client-write", outcome="accepted", gtid=gtid_json(gtid), **base)
        self._drain(node)

    # ---------------------------------------------------------------- main loop

    def run(self) -> SimResult:
        sc = self.scenario
        self._record(
            None,
            "scenario",
            format=TRACE_FORMAT,
            seed=self.seed,
            scenario=sc.to_json(),
        )
        for f in sc.faults:
            self._push(f.at, FAULT, f)
        for w in sc.writes:
            self._push(w.at, CLIENT, w)
        for nid in self.config.member_ids:
            self._start_node(nid)

        while self.queue and self.queue[0][0] <= sc.horizon:
            t, _, kind, data = heapq.heappop(self.queue)
            self.now = t
            if kind == DELIVER:
                frm, to, msg = data
                node = self.nodes.get(to)
                if node is None:
                    if self.trace_messages:
                        self._record(frm, "message-dropped", to=to, reason="crashed", msg=describe(msg))
                    continue
                if self.trace_messages:
                    self._record(to, "message-delivered", sender=frm, msg=describe(msg))
                node.receive(msg, t)
                self._drain(node)
            elif kind == TIMER:
                nid, inc = data
                node = self.nodes.get(nid)
                if node is None or node.disk.incarnation != inc or self.timer_at.get(nid) != t:
                    continue
                self._ticks[(nid, t)] += 1
                if self._ticks[(nid, t)] > MAX_TICKS_PER_INSTANT:
                    raise RuntimeError(f"node {nid} livelocked at t={t}")
                self.timer_at[nid] = None
                node.on_tick(t)
                self._drain(node)
            elif kind == FAULT:
                self._apply_fault(data)
            else:
                self.client_write(data)

        self.now = sc.horizon
        final = self.final_state()
        self._record(None, "final-state", **final)
        return SimResult(self.trace, final, dict(self.nodes), self.disks)

    def _partition_groups(self) -> Optional[list[list[int]]]:
        if self.group_of is None:
            return None
        groups: dict[int, list[int]] = {}
        for n in sorted(self.group_of):
            groups.setdefault(self.group_of[n], []).append(n)
        return sorted(groups.values())

    def final_state(self) -> dict[str, Any]:
        nodes: dict[str, Any] = {}
        for nid in self.config.member_ids:
            node = self.nodes.get(nid)
            if node is not None:
                snap = node.snapshot()
                snap["crashed"] = False
            else:
                ghost = ReplicaNode(nid, self.config, _copy_disk(self.disks[nid]), self.now)
                snap = ghost.snapshot()
                snap.update(role="down", term=0, crashed=True)
            nodes[str(nid)] = snap
        return {
            "nodes": nodes,
            "partition": self._partition_groups(),
            "drops": sorted([a, b, p] for (a, b), p in self.drops.items()),
        }


def _copy_disk(d: DurableState) -> DurableState:
    return DurableState(d.oplog, d.max_voted, d.next_opid, d.incarnation)


def run(scenario: Scenario, seed: int, trace_messages: bool = True) -> SimResult:
    return Simulation(scenario, seed, trace_messages).run()


def dumps_record(rec: dict[str, Any]) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def write_trace(path: Union[str, Path], records: Iterable[dict[str, Any]]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")


class TraceParseError(ValueError):
    pass


def read_trace(path: Union[str, Path]) -> list[dict[str, Any]]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"line {lineno}: {exc}") from exc
            if not isinstance(rec, dict) or "kind" not in rec or "t" not in rec:
                raise TraceParseError(f"line {lineno}: not a trace record")
            records.append(rec)
    if not records or records[0]["kind"] != "scenario":
        raise TraceParseError("trace does not start with a scenario record")
    return records
