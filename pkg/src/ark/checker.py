"""Offline safety analysis of simulation traces.

Every check is a pure function of the trace records (as produced by
:mod:`ark.sim`, or read back from a trace file) and returns a list of
:class:`Violation`. Node logs and stores are re-derived from ``append`` and
``rollback`` records rather than trusted from the final-state dump, and the two
are cross-checked.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

from ark.core import majority_of

Record = dict[str, Any]
Key = tuple[int, int, str]  # (term, opid, client id)

FAULT_KINDS = frozenset({"partition", "heal", "drop", "crash", "restart", "delay-set"})


@dataclass
class Violation:
    property: str
    events: list[Record]
    explanation: str
    informational: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "property": self.property,
            "explanation": self.explanation,
            "informational": self.informational,
            "events": self.events,
        }


@dataclass
class TraceInfo:
    members: list[int]
    mode: str
    heartbeat_period: int
    heartbeat_timeout: int
    max_delay: int
    horizon: int
    final: Optional[Record]

    @property
    def ark(self) -> bool:
        return self.mode == "ark"

    @property
    def stepdown_bound(self) -> int:
        return self.heartbeat_period + self.heartbeat_timeout + self.max_delay


def trace_info(trace: Sequence[Record]) -> TraceInfo:
    head = trace[0]
    if head["kind"] != "scenario":
        raise ValueError("trace must start with a scenario record")
    sc = head["scenario"]
    cfg = sc["config"]
    max_delay = max(
        [sc["network"]["delay"][1]] + [r["delay"][1] for r in trace if r["kind"] == "delay-set"]
    )
    final = trace[-1] if trace[-1]["kind"] == "final-state" else None
    return TraceInfo(
        members=[m["id"] for m in cfg["members"]],
        mode=cfg["mode"],
        heartbeat_period=cfg["heartbeat_period"],
        heartbeat_timeout=cfg["heartbeat_timeout"],
        max_delay=max_delay,
        horizon=sc["horizon"],
        final=final,
    )


def _gt(g: Optional[list[int]]) -> Optional[tuple[int, int]]:
    return None if g is None else (g[0], g[1])


class _LogReplay:
    """Per-node oplog and store reconstruction from the trace."""

    def __init__(self) -> None:
        self.logs: dict[int, list[tuple[Key, tuple, Any]]] = defaultdict(list)
        self.stores: dict[int, dict[str, str]] = defaultdict(dict)

    def tail(self, node: int) -> Optional[tuple[int, int]]:
        log = self.logs[node]
        return (log[-1][0][0], log[-1][0][1]) if log else None

    def append(self, rec: Record) -> tuple[Key, Optional[tuple[int, int]]]:
        node = rec["node"]
        prev = self.tail(node)
        key = (rec["gtid"][0], rec["gtid"][1], rec["client"])
        op = tuple(rec["op"])
        store = self.stores[node]
        _, k, v = op
        undo = store.get(k)
        if op[0] == "set":
            store[k] = v
        else:
            store.pop(k, None)
        self.logs[node].append((key, op, undo))
        return key, prev

    def rollback(self, rec: Record) -> tuple[list[Key], bool]:
        """Undo ``rec['removed']``; returns the removed keys and whether they matched the tail."""
        node = rec["node"]
        log = self.logs[node]
        store = self.stores[node]
        removed = []
        consistent = len(rec["removed"]) <= len(log)
        for g in rec["removed"]:
            if not log:
                consistent = False
                break
            key, op, undo = log.pop()
            if (key[0], key[1]) != (g[0], g[1]):
                consistent = False
            if undo is None:
                store.pop(op[1], None)
            else:
                store[op[1]] = undo
            removed.append(key)
        if len(log) != rec.get("prefix_len", len(log)):
            consistent = False
        return removed, consistent

    def keys(self, node: int) -> list[Key]:
        return [k for k, _, _ in self.logs[node]]


def _majority_acked(trace: Sequence[Record]) -> list[tuple[int, Key, Record]]:
    out = []
    for i, r in enumerate(trace):
        if r["kind"] == "wait-completed" and r["status"] == "satisfied" and r["wc"] == "majority":
            out.append((i, (r["gtid"][0], r["gtid"][1], r["client"]), r))
    return out


def _primary_intervals(trace: Sequence[Record], horizon: int) -> list[dict[str, Any]]:
    """Closed-open intervals during which a node held the primary role."""
    open_: dict[int, dict[str, Any]] = {}
    out = []
    for i, r in enumerate(trace):
        node = r["node"]
        if r["kind"] == "role-change":
            if r["role"] == "primary":
                open_[node] = {"node": node, "term": r["term"], "start": r["t"], "start_i": i}
            elif node in open_:
                iv = open_.pop(node)
                iv.update(end=r["t"], end_i=i)
                out.append(iv)
        elif r["kind"] == "crash" and node in open_:
            iv = open_.pop(node)
            iv.update(end=r["t"], end_i=i)
            out.append(iv)
    for iv in open_.values():
        iv.update(end=None, end_i=None)
        out.append(iv)
    out.sort(key=lambda iv: iv["start_i"])
    return out


# ---------------------------------------------------------------------- network view


class _Network:
    """Link and liveness state over time, rebuilt from the fault records."""

    def __init__(self, trace: Sequence[Record], members: list[int]):
        self.members = members
        self.faults = [(i, r) for i, r in enumerate(trace) if r["kind"] in FAULT_KINDS]

    def state_at(self, index: int):
        groups: Optional[dict[int, int]] = None
        drops: dict[tuple[int, int], float] = {}
        down: set[int] = set()
        for i, r in self.faults:
            if i > index:
                break
            k = r["kind"]
            if k == "partition":
                groups = {n: gi for gi, g in enumerate(r["groups"]) for n in g}
            elif k == "heal":
                groups, drops = None, {}
            elif k == "drop":
                link = (r["link"][0], r["link"][1])
                if r["probability"] > 0:
                    drops[link] = r["probability"]
                else:
                    drops.pop(link, None)
            elif k == "crash":
                down.add(r["node"])
            elif k == "restart":
                down.discard(r["node"])

        def link(a: int, b: int) -> bool:
            if a in down or b in down:
                return False
            if groups is not None and groups[a] != groups[b]:
                return False
            return drops.get((a, b), 0.0) == 0.0

        return link, down

    def faults_between(self, t0: int, t1: int) -> list[Record]:
        return [r for _, r in self.faults if t0 < r["t"] <= t1]

    def components(self, index: int) -> list[set[int]]:
        link, down = self.state_at(index)
        up = [m for m in self.members if m not in down]
        parent = {m: m for m in up}

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a in up:
            for b in up:
                if a < b and link(a, b) and link(b, a):
                    parent[find(a)] = find(b)
        comps: dict[int, set[int]] = defaultdict(set)
        for m in up:
            comps[find(m)].add(m)
        return list(comps.values())

    def majority_component(self, index: int) -> Optional[set[int]]:
        need = majority_of(len(self.members))
        for c in self.components(index):
            if len(c) >= need:
                return c
        return None


# ---------------------------------------------------------------------- checks


def check_election_safety(trace: Sequence[Record]) -> list[Violation]:
    info = trace_info(trace)
    if info.ark:
        by_term: dict[int, list[Record]] = defaultdict(list)
        for r in trace:
            if r["kind"] == "election-won":
                by_term[r["term"]].append(r)
        return [
            Violation(
                "election_safety",
                wins,
                f"term {term} was won {len(wins)} times",
            )
            for term, wins in sorted(by_term.items())
            if len(wins) > 1
        ]
    # Legacy elections carry no electionTermId: report overlapping primaries
    # that both accepted writes while the overlap lasted.
    out = []
    ivs = _primary_intervals(trace, info.horizon)
    writes = [
        (i, r) for i, r in enumerate(trace) if r["kind"] == "append" and r["source"] is None
    ]
    end_of = lambda iv: len(trace) if iv["end_i"] is None else iv["end_i"]  # noqa: E731
    for a_idx, a in enumerate(ivs):
        for b in ivs[a_idx + 1 :]:
            if a["node"] == b["node"]:
                continue
            lo = max(a["start_i"], b["start_i"])
            hi = min(end_of(a), end_of(b))
            if lo >= hi:
                continue
            wa = [r for i, r in writes if lo <= i < hi and r["node"] == a["node"]]
            wb = [r for i, r in writes if lo <= i < hi and r["node"] == b["node"]]
            if wa and wb:
                out.append(
                    Violation(
                        "election_safety",
                        [trace[a["start_i"]], trace[b["start_i"]], wa[0], wb[0]],
                        f"nodes {a['node']} and {b['node']} were primary at the same time "
                        "and both accepted writes",
                        informational=True,
                    )
                )
    return out


def check_no_acked_rollback(trace: Sequence[Record]) -> list[Violation]:
    acked = _majority_acked(trace)
    if not acked:
        return []
    first_ack: dict[Key, tuple[int, Record]] = {}
    for i, key, r in acked:
        first_ack.setdefault(key, (i, r))
    out = []
    seen: set[Key] = set()
    for i, r in enumerate(trace):
        if r["kind"] != "rollback":
            continue
        for g, client in zip(r["removed"], r["clients"]):
            key = (g[0], g[1], client)
            hit = first_ack.get(key)
            if hit is None or hit[0] > i or key in seen:
                continue
            seen.add(key)
            out.append(
                Violation(
                    "no_acked_rollback",
                    [hit[1], r],
                    f"write {client} at <{g[0]},{g[1]}> was majority-acknowledged at "
                    f"t={hit[1]['t']} and rolled back on node {r['node']} at t={r['t']}",
                )
            )
    return out


def check_log_matching(trace: Sequence[Record], final: Optional[Record] = None) -> list[Violation]:
    """An entry's identity fixes its payload and predecessor, hence the whole prefix."""
    replay = _LogReplay()
    ident: dict[tuple[int, int], tuple[str, tuple, Optional[tuple[int, int]], Record]] = {}
    out = []
    for r in trace:
        if r["kind"] == "append":
            key, prev = replay.append(r)
            g = (key[0], key[1])
            mine = (key[2], tuple(r["op"]), prev)
            seen = ident.get(g)
            if seen is None:
                ident[g] = (*mine, r)
            elif seen[:3] != mine:
                out.append(
                    Violation(
                        "log_matching",
                        [seen[3], r],
                        f"GTID <{g[0]},{g[1]}> names different entries or prefixes "
                        f"on nodes {seen[3]['node']} and {r['node']}",
                    )
                )
        elif r["kind"] == "rollback":
            replay.rollback(r)
    return out


def check_leader_properties(trace: Sequence[Record]) -> list[Violation]:
    out = []
    role: dict[int, str] = {}
    replay = _LogReplay()
    acked_so_far: list[tuple[Key, Record]] = []
    acked_keys = {}
    for i, key, r in _majority_acked(trace):
        acked_keys.setdefault(i, (key, r))
    for i, r in enumerate(trace):
        k = r["kind"]
        if k == "role-change":
            role[r["node"]] = r["role"]
        elif k == "crash":
            role[r["node"]] = "down"
        elif k == "append":
            replay.append(r)
        elif k == "rollback":
            if role.get(r["node"]) == "primary":
                out.append(
                    Violation(
                        "leader_append_only",
                        [r],
                        f"node {r['node']} rolled back entries while primary",
                    )
                )
            replay.rollback(r)
        elif k == "election-won":
            have = set(replay.keys(r["node"]))
            for key, ack in acked_so_far:
                if key not in have:
                    out.append(
                        Violation(
                            "leader_completeness",
                            [ack, r],
                            f"node {r['node']} won term {r['term']} without majority-"
                            f"acknowledged write {key[2]} at <{key[0]},{key[1]}>",
                        )
                    )
        if i in acked_keys:
            acked_so_far.append(acked_keys[i])
    return out


def check_state_machine_safety(
    trace: Sequence[Record], final: Optional[Record] = None
) -> list[Violation]:
    info = trace_info(trace)
    final = final if final is not None else info.final
    replay = _LogReplay()
    out = []
    for r in trace:
        if r["kind"] == "append":
            declared = _gt(r["prev"])
            tail = replay.tail(r["node"])
            if declared != tail:
                out.append(
                    Violation(
                        "state_machine_safety",
                        [r],
                        f"node {r['node']} applied <{r['gtid'][0]},{r['gtid'][1]}> after "
                        f"{tail} although its source's predecessor is {declared}; divergent "
                        "entries were not reverted first",
                    )
                )
            replay.append(r)
        elif r["kind"] == "rollback":
            _, consistent = replay.rollback(r)
            if not consistent:
                out.append(
                    Violation(
                        "state_machine_safety",
                        [r],
                        f"rollback on node {r['node']} does not remove its log tail",
                    )
                )
    if final is None:
        return out
    comp = _Network(trace, info.members).majority_component(len(trace))
    if not comp:
        return out
    nodes = sorted(comp)
    ref = nodes[0]
    ref_log = replay.keys(ref)
    ref_store = replay.stores[ref]
    for n in nodes[1:]:
        if replay.keys(n) != ref_log or replay.stores[n] != ref_store:
            out.append(
                Violation(
                    "state_machine_safety",
                    [final],
                    f"nodes {ref} and {n} are in the majority component at the horizon "
                    "but hold different logs or stores",
                )
            )
    return out


def check_self_consistency(trace: Sequence[Record], final: Optional[Record] = None) -> list[Violation]:
    """The re-derived logs and stores must match the final-state dump."""
    info = trace_info(trace)
    final = final if final is not None else info.final
    if final is None:
        return []
    replay = _LogReplay()
    for r in trace:
        if r["kind"] == "append":
            replay.append(r)
        elif r["kind"] == "rollback":
            replay.rollback(r)
    out = []
    for sid, snap in final["nodes"].items():
        n = int(sid)
        dumped = [(e[0], e[1], e[2]) for e in snap["oplog"]]
        if dumped != replay.keys(n) or snap["store"] != replay.stores[n]:
            out.append(
                Violation(
                    "trace_consistency",
                    [final],
                    f"final state of node {n} disagrees with its replayed appends and rollbacks",
                )
            )
    return out


def check_stepdown_bound(trace: Sequence[Record]) -> list[Violation]:
    """A primary overlapped by a higher-term primary must leave within the bound.

    Exempt when a fault fires inside the window or when no node of the newer
    primary's bidirectionally connected component has a link to the old one.
    """
    info = trace_info(trace)
    if not info.ark:
        return []
    bound = info.stepdown_bound
    net = _Network(trace, info.members)
    ivs = _primary_intervals(trace, info.horizon)
    out = []
    for old in ivs:
        for new in ivs:
            if new["term"] <= old["term"] or new["node"] == old["node"]:
                continue
            new_end = len(trace) if new["end_i"] is None else new["end_i"]
            old_end = len(trace) if old["end_i"] is None else old["end_i"]
            start_i = max(old["start_i"], new["start_i"])
            if start_i >= min(old_end, new_end):
                continue
            t0 = trace[start_i]["t"]
            deadline = t0 + bound
            left = old["end"]
            if left is not None and left <= deadline:
                continue
            if left is None and deadline > info.horizon:
                continue
            if net.faults_between(t0, deadline):
                continue
            link, down = net.state_at(start_i)
            comp = next((c for c in net.components(start_i) if new["node"] in c), set())
            if not any(link(m, old["node"]) for m in comp if m != old["node"]):
                continue
            out.append(
                Violation(
                    "stepdown_bound",
                    [trace[old["start_i"]], trace[new["start_i"]]]
                    + ([trace[old["end_i"]]] if old["end_i"] is not None else []),
                    f"node {old['node']} stayed primary for term {old['term']} past "
                    f"t={deadline} although node {new['node']} was primary for term "
                    f"{new['term']} from t={t0} (bound {bound} ms)",
                )
            )
    return out


def check_term_invariants(trace: Sequence[Record]) -> list[Violation]:
    """Ark bookkeeping: maxVotedTermId monotone, one Yes per term, ack rule, primary terms."""
    info = trace_info(trace)
    if not info.ark:
        return []
    out = []
    last_voted: dict[int, tuple[int, Record]] = {}
    yes_votes: dict[tuple[int, int], Record] = {}
    yes_order: dict[int, list[int]] = defaultdict(list)
    primary_term: dict[int, Optional[int]] = {}
    wins: list[Record] = []
    for r in trace:
        k, n = r["kind"], r["node"]
        if "max_voted" in r and n is not None:
            prev = last_voted.get(n)
            if prev is not None and r["max_voted"] < prev[0]:
                out.append(
                    Violation(
                        "max_voted_monotonic",
                        [prev[1], r],
                        f"maxVotedTermId of node {n} fell from {prev[0]} to {r['max_voted']}",
                    )
                )
            last_voted[n] = (r["max_voted"], r)
        if k == "vote-cast" and r["vote"] == "yes":
            key = (n, r["term"])
            if key in yes_votes:
                out.append(
                    Violation(
                        "single_yes_per_term",
                        [yes_votes[key], r],
                        f"node {n} voted Yes twice in term {r['term']}",
                    )
                )
            yes_votes[key] = r
            yes_order[n].append(r["term"])
        elif k == "ack-advance" and r["gtid"][0] < r["max_voted"]:
            out.append(
                Violation(
                    "ack_rule",
                    [r],
                    f"node {n} acknowledged term-{r['gtid'][0]} entries after voting in "
                    f"term {r['max_voted']}",
                )
            )
        elif k == "role-change":
            primary_term[n] = r["term"] if r["role"] == "primary" else None
        elif k == "crash":
            primary_term[n] = None
        elif k == "append" and r["source"] is None:
            if primary_term.get(n) != r["gtid"][0]:
                out.append(
                    Violation(
                        "primary_term",
                        [r],
                        f"node {n} generated <{r['gtid'][0]},{r['gtid'][1]}> while "
                        f"primary for term {primary_term.get(n)}",
                    )
                )
        elif k == "election-won":
            wins.append(r)
    for i, a in enumerate(wins):
        for b in wins[i + 1 :]:
            lo, hi = sorted((a, b), key=lambda w: w["term"])
            if lo["term"] == hi["term"]:
                continue  # reported by check_election_safety
            common = set(lo["voters"]) & set(hi["voters"])
            ordered = any(
                yes_order[v].index(lo["term"]) < yes_order[v].index(hi["term"])
                for v in common
                if lo["term"] in yes_order[v] and hi["term"] in yes_order[v]
            )
            if not ordered:
                out.append(
                    Violation(
                        "term_order",
                        [lo, hi],
                        f"terms {lo['term']} and {hi['term']} share no voter that voted "
                        "for them in order",
                    )
                )
    return out


CHECKS: dict[str, Callable[..., list[Violation]]] = {
    f.__name__: f
    for f in (
        check_election_safety,
        check_no_acked_rollback,
        check_log_matching,
        check_leader_properties,
        check_state_machine_safety,
        check_stepdown_bound,
        check_term_invariants,
        check_self_consistency,
    )
}


@dataclass
class Report:
    found: dict[str, list[Violation]] = field(default_factory=dict)

    @property
    def violations(self) -> list[Violation]:
        return [v for vs in self.found.values() for v in vs]

    @property
    def failures(self) -> list[Violation]:
        return [v for v in self.violations if not v.informational]

    @property
    def ok(self) -> bool:
        return not self.failures

    def failing_checks(self) -> list[str]:
        return [name for name, vs in self.found.items() if any(not v.informational for v in vs)]

    def to_json(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "checks": {name: [v.to_json() for v in vs] for name, vs in self.found.items()},
        }

    def summary_lines(self) -> list[str]:
        lines = []
        for name, vs in self.found.items():
            hard = sum(not v.informational for v in vs)
            soft = len(vs) - hard
            status = "ok" if not vs else f"{hard} violation(s)" if hard else f"{soft} informational"
            lines.append(f"{name:28s} {status}")
        for name, vs in self.found.items():
            for v in vs:
                tag = "info" if v.informational else "FAIL"
                lines.append(f"[{tag}] {name} ({v.property}): {v.explanation}")
        return lines


def check_all(trace: Sequence[Record], only: Optional[Iterable[str]] = None) -> Report:
    report = Report()
    for name in list(only) if only is not None else list(CHECKS):
        report.found[name] = CHECKS[name](trace)
    return report
