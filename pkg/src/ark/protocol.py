"""Per-replica protocol state machine for Ark and the legacy election protocol.

A :class:`ReplicaNode` never talks to the network or the clock directly. Each
handler is called with the current virtual time and leaves its effects in
``node.outbox`` (``(destination, message)`` pairs) and ``node.events``
(``(kind, payload)`` trace records) for the scheduler to drain.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

from ark.core import GTID, ProtocolMode, ReplicaSetConfig, WriteConcern, write_concern_satisfied
from ark.messages import (
    Heartbeat,
    HeartbeatRequest,
    Message,
    PositionReport,
    SpeculativeReply,
    SpeculativeRequest,
    SyncDiverged,
    SyncEntries,
    SyncPull,
    VoteReply,
    VoteRequest,
)
from ark.oplog import Oplog, OplogEntry, OplogError, find_divergence
from ark.statemachine import KvOp, KvStore


class ProtocolError(Exception):
    """Raised when a node is asked to do something no correct run can produce."""


class Role(str, enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"
    CANDIDATE = "candidate"


def gtid_lt(a: Optional[GTID], b: Optional[GTID]) -> bool:
    """``a < b`` with ``None`` (empty log) below every GTID."""
    if b is None:
        return False
    if a is None:
        return True
    return a < b


def gtid_json(g: Optional[GTID]) -> Optional[list[int]]:
    return None if g is None else [g.term, g.opid]


@dataclass
class DurableState:
    """What survives a crash: the oplog (with the applied store), votes, opid counter."""

    oplog: Oplog = field(default_factory=Oplog)
    max_voted: int = 0
    next_opid: int = 0
    incarnation: int = 0


@dataclass
class PeerView:
    last_heard: int
    role: Role = Role.SECONDARY
    term: int = 0
    last_gtid: Optional[GTID] = None
    max_voted: int = 0
    max_known: int = 0


@dataclass
class PendingWait:
    gtid: GTID
    wc: WriteConcern
    client: str
    deadline: int


@dataclass
class Election:
    attempt: int
    phase: str  # "speculative" | "authoritative"
    deadline: int
    term: int = 0
    ballots: dict[int, SpeculativeReply] = field(default_factory=dict)
    votes: dict[int, VoteReply] = field(default_factory=dict)


@dataclass
class OutstandingPull:
    source: int
    after: Optional[GTID]
    sent_at: int


class Decision(NamedTuple):
    action: str  # "abort" | "sleep" | "proceed"
    term: int = 0
    delay: int = 0
    reason: str = ""


class ReplicaNode:
    def __init__(
        self,
        node_id: int,
        config: ReplicaSetConfig,
        disk: Optional[DurableState] = None,
        now: int = 0,
        rng: Optional[random.Random] = None,
    ):
        if node_id not in config.member_ids:
            raise ValueError(f"{node_id} is not a member")
        self.id = node_id
        self.config = config
        self.ark = config.mode is ProtocolMode.ARK
        self.member = config.member(node_id)
        self.rng = rng or random.Random(node_id)
        self.disk = disk if disk is not None else DurableState()
        self.disk.incarnation += 1
        self.now = now

        self.store = KvStore()
        for e in self.disk.oplog:
            self.store.apply(e.op)

        self.role = Role.SECONDARY
        self.term = 0  # electionTermId while primary
        self.max_known = self.disk.max_voted
        self.peers = {
            m: PeerView(last_heard=now) for m in config.member_ids if m != node_id
        }
        self.ack_watermark: Optional[GTID] = None
        self.pending: list[PendingWait] = []
        self.acked: dict[int, GTID] = {}
        self.sync_source: Optional[int] = None
        self.sync_blacklist: dict[int, int] = {}
        self.pull: Optional[OutstandingPull] = None
        self.next_pull_at = now
        self.election: Optional[Election] = None
        self.attempts = 0
        self.slept = False
        self.retry_at: Optional[int] = None
        self.next_election_ok = now
        self.last_attempt: Optional[int] = None
        self.last_primary_seen = now
        self.last_yes: Optional[int] = None  # legacy 30 s rule and the optional Ark voter cooldown
        self.next_heartbeat = now

        self.outbox: list[tuple[int, Message]] = []
        self.events: list[tuple[str, dict[str, Any]]] = []

        if self.ark:
            self._advance_ack_watermark()
        else:
            self.ack_watermark = self.last_gtid

    # ------------------------------------------------------------------ state

    @property
    def oplog(self) -> Oplog:
        return self.disk.oplog

    @property
    def max_voted(self) -> int:
        return self.disk.max_voted

    @property
    def last_gtid(self) -> Optional[GTID]:
        return self.disk.oplog.last_gtid()

    @property
    def majority(self) -> int:
        return self.config.majority

    def reachable(self, peer: int, now: int) -> bool:
        return now - self.peers[peer].last_heard < self.config.heartbeat_timeout

    def reachable_peers(self, now: int) -> list[int]:
        return [p for p in self.peers if self.reachable(p, now)]

    def known_primary(self, now: int, exclude: Optional[int] = None) -> Optional[int]:
        """The reachable peer currently believed primary, ignoring deposed ones in Ark mode."""
        best = None
        for pid, pv in self.peers.items():
            if pid == exclude or pv.role is not Role.PRIMARY or not self.reachable(pid, now):
                continue
            if self.ark and pv.term < self.max_known:
                continue
            if best is None or pv.term > self.peers[best].term:
                best = pid
        return best

    def _emit(self, kind: str, **payload: Any) -> None:
        self.events.append((kind, payload))

    def _send(self, to: int, msg: Message) -> None:
        self.outbox.append((to, msg))

    def _broadcast(self, msg: Message) -> None:
        for p in self.peers:
            self.outbox.append((p, msg))

    def _set_role(self, role: Role) -> None:
        if role is not self.role:
            self.role = role
            self._emit("role-change", role=role.value, term=self.term)

    def _raise_max_voted(self, term: int) -> None:
        if term < self.disk.max_voted:
            raise ProtocolError("maxVotedTermId may never decrease")
        self.disk.max_voted = term
        self._observe_term(term)

    def _observe_term(self, term: int) -> None:
        """Fold in evidence that some replica voted Yes in ``term``."""
        if not self.ark or term <= self.max_known:
            return
        self.max_known = term
        if self.role is Role.PRIMARY and self.max_known > self.term:
            self.step_down("newer term known", self.now)

    # ------------------------------------------------------------------ clients

    def on_client_write(
        self, op: KvOp, wc: WriteConcern, client: str, deadline: int, now: int
    ) -> Optional[GTID]:
        """Accept a write as primary; returns its GTID, or ``None`` when not primary."""
        self.now = now
        if self.role is not Role.PRIMARY:
            return None
        gtid = GTID(self.term, self.disk.next_opid)
        self.disk.next_opid += 1
        self._append(OplogEntry(gtid, op, self.store.apply(op), client), None)
        self.ack_watermark = gtid
        self.pending.append(PendingWait(gtid, wc, client, deadline))
        self._check_waits()
        return gtid

    def _append(self, entry: OplogEntry, source: Optional[int]) -> None:
        prev = self.last_gtid
        try:
            self.oplog.append(entry)
        except OplogError as exc:
            raise ProtocolError(str(exc)) from exc
        self._emit(
            "append",
            gtid=gtid_json(entry.gtid),
            prev=gtid_json(prev),
            op=entry.op.to_json(),
            client=entry.client,
            source=source,
            max_voted=self.max_voted,
        )

    def _complete(self, w: PendingWait, status: str) -> None:
        self._emit(
            "wait-completed",
            gtid=gtid_json(w.gtid),
            client=w.client,
            wc=w.wc.to_json(),
            status=status,
        )

    def _check_waits(self) -> None:
        if not self.pending:
            return
        remaining = []
        for w in self.pending:
            ackers = {self.id}
            ackers.update(r for r, g in self.acked.items() if g >= w.gtid)
            if write_concern_satisfied(w.wc, ackers, self.config):
                self._complete(w, "satisfied")
            else:
                remaining.append(w)
        self.pending = remaining

    # ------------------------------------------------------------------ timers

    def on_tick(self, now: int) -> None:
        self.now = now
        if now >= self.next_heartbeat:
            self._send_heartbeats()
            self._report_position()
            self.next_heartbeat = now + self.config.heartbeat_period

        if self.pending:
            live = []
            for w in self.pending:
                if now >= w.deadline:
                    self._complete(w, "timeout")
                else:
                    live.append(w)
            self.pending = live

        if self.role is Role.PRIMARY:
            if 1 + len(self.reachable_peers(now)) < self.majority:
                self.step_down("lost majority", now)
        elif self.role is Role.CANDIDATE:
            self._maybe_finish_election(now)

        if self.role is Role.SECONDARY:
            if self.retry_at is not None and now >= self.retry_at:
                self.retry_at = None
                if self.known_primary(now) is None:
                    self.start_speculative_election(now)
                else:
                    self.slept = False
            elif self.retry_at is None and self._should_start_election(now):
                self.start_speculative_election(now)
        if self.role is Role.SECONDARY:
            self._maybe_pull(now)

    def next_wakeup(self, now: int) -> int:
        """Earliest time at which :meth:`on_tick` has work to do."""
        times = [self.next_heartbeat]
        timeout = self.config.heartbeat_timeout
        times.extend(w.deadline for w in self.pending)
        if self.role is not Role.SECONDARY or self.member.electable:
            times.extend(
                pv.last_heard + timeout
                for pv in self.peers.values()
                if pv.last_heard + timeout > now
            )
        if self.role is Role.CANDIDATE and self.election is not None:
            times.append(self.election.deadline)
        elif self.role is Role.SECONDARY:
            if self.retry_at is not None:
                times.append(self.retry_at)
            elif self.member.electable:
                t = self._election_allowed_at()
                if t > now:
                    times.append(t)
                elif self._should_start_election(now):
                    times.append(now)
            if self.pull is None:
                times.append(max(self.next_pull_at, now))
            else:
                times.append(self.pull.sent_at + self.config.heartbeat_period)
        return max(min(times), now)

    # ------------------------------------------------------------------ heartbeats

    def _heartbeat(self) -> Heartbeat:
        return Heartbeat(
            self.id,
            self.role.value,
            self.term if self.role is Role.PRIMARY else 0,
            self.last_gtid,
            self.max_voted,
            self.max_known,
        )

    def _send_heartbeats(self) -> None:
        self._broadcast(self._heartbeat())

    def on_heartbeat(self, msg: Heartbeat, now: int) -> None:
        self.now = now
        pv = self.peers[msg.sender]
        pv.last_heard = now
        pv.role = Role(msg.role)
        pv.term = msg.term
        pv.last_gtid = msg.last_gtid
        pv.max_voted = msg.max_voted
        pv.max_known = msg.max_known
        if self.ark:
            self._observe_term(max(msg.max_known, msg.max_voted))
        elif self.role is Role.PRIMARY and pv.role is Role.PRIMARY:
            self.step_down("another primary", now)
        if pv.role is Role.PRIMARY and (not self.ark or pv.term >= self.max_known):
            self.last_primary_seen = now

    def on_heartbeat_request(self, msg: HeartbeatRequest, now: int) -> None:
        self.now = now
        self._send_heartbeats()

    # ------------------------------------------------------------------ elections

    def _election_allowed_at(self) -> int:
        t = max(self.last_primary_seen + self.config.heartbeat_timeout, self.next_election_ok)
        if self.config.election_min_interval and self.last_attempt is not None:
            t = max(t, self.last_attempt + self.config.election_min_interval)
        return t

    def _should_start_election(self, now: int) -> bool:
        if not self.member.electable or self.role is not Role.SECONDARY:
            return False
        if now < self._election_allowed_at():
            return False
        return self.known_primary(now) is None

    def step_up(self, now: int) -> bool:
        """Operator-forced election attempt; returns False when not applicable."""
        self.now = now
        if self.role is not Role.SECONDARY or not self.member.electable:
            return False
        self.retry_at = None
        self.slept = True  # forced: no tie-breaking sleep
        self.start_speculative_election(now)
        return True

    def start_speculative_election(self, now: int) -> None:
        self.now = now
        self.attempts += 1
        self.last_attempt = now
        attempt = self.disk.incarnation * 1_000_000 + self.attempts
        self.election = Election(attempt, "speculative", now + self.config.heartbeat_timeout)
        self.pull = None
        self._set_role(Role.CANDIDATE)
        self._emit("election-start", phase="speculative", attempt=attempt, slept=self.slept)
        self._broadcast(SpeculativeRequest(self.id, attempt, self.last_gtid))
        self._maybe_finish_election(now)

    def on_speculative_request(self, msg: SpeculativeRequest, now: int) -> SpeculativeReply:
        self.now = now
        mine = self.last_gtid
        veto, reason = False, ""
        if self.ark:
            if gtid_lt(msg.candidate_last, mine):
                veto, reason = True, "candidate behind"
            else:
                implied = (msg.candidate_last.term if msg.candidate_last else 0) + 1
                if self._sees_primary(now, msg.sender, min_term=implied):
                    veto, reason = True, "primary exists"
        elif self._sees_primary(now, msg.sender):
            veto, reason = True, "primary exists"
        refuse = (
            not self.ark
            and self.last_yes is not None
            and now - self.last_yes < self.config.legacy_vote_cooldown
        )
        reply = SpeculativeReply(
            self.id, msg.attempt, veto, reason, self.max_voted, mine, refuse
        )
        self._send(msg.sender, reply)
        return reply

    def _sees_primary(self, now: int, candidate: int, min_term: int = 0) -> bool:
        if self.role is Role.PRIMARY and self.term >= min_term:
            return True
        p = self.known_primary(now, exclude=candidate)
        return p is not None and self.peers[p].term >= min_term

    def on_speculative_reply(self, msg: SpeculativeReply, now: int) -> None:
        self.now = now
        self._observe_term(msg.max_voted)
        e = self.election
        if self.role is not Role.CANDIDATE or e is None or e.phase != "speculative":
            return
        if msg.attempt != e.attempt:
            return
        e.ballots[msg.sender] = msg
        self._maybe_finish_election(now)

    def decide_after_speculative(
        self, ballots: dict[int, SpeculativeReply], now: int
    ) -> Decision:
        mine = self.last_gtid
        if any(b.would_veto for b in ballots.values()):
            return Decision("abort", reason="veto")
        if any(gtid_lt(mine, b.voter_last) for b in ballots.values()):
            return Decision("abort", reason="voter ahead")
        if len(ballots) + 1 < self.majority:
            return Decision("abort", reason="no quorum")
        if not self.ark:
            if self.last_yes is not None and now - self.last_yes < self.config.legacy_vote_cooldown:
                return Decision("abort", reason="cooldown")
            willing = sum(1 for b in ballots.values() if not b.legacy_would_refuse)
            if willing + 1 < self.majority:
                return Decision("abort", reason="cooldown")
        if not self.slept:
            for voter, b in ballots.items():
                if b.voter_last == mine and self.config.member(voter).electable:
                    delay = self.rng.randint(
                        self.config.election_sleep_min, self.config.election_sleep_max
                    )
                    return Decision("sleep", delay=delay, reason="tie")
        if self.ark:
            term = max([self.max_voted] + [b.max_voted for b in ballots.values()]) + 1
        else:
            term = (mine.term if mine else 0) + 1
        return Decision("proceed", term=term)

    def _maybe_finish_election(self, now: int) -> None:
        e = self.election
        if e is None or self.role is not Role.CANDIDATE:
            return
        got = e.ballots if e.phase == "speculative" else e.votes
        waiting = [p for p in self.reachable_peers(now) if p not in got]
        if e.phase == "authoritative" and any(v.vote == "veto" for v in e.votes.values()):
            waiting = []
        if e.phase == "speculative" and any(b.would_veto for b in e.ballots.values()):
            waiting = []  # a veto is decisive; no need to hear from the rest
        if waiting and now < e.deadline:
            return
        if e.phase == "speculative":
            self._conclude_speculative(now)
        else:
            self.on_vote_replies(e.votes, now)

    def _back_off(self, now: int) -> None:
        self.slept = False
        self.election = None
        self.next_election_ok = now + self.rng.randint(
            self.config.election_sleep_min, self.config.election_sleep_max
        )
        self._set_role(Role.SECONDARY)
        self.next_pull_at = now

    def _conclude_speculative(self, now: int) -> None:
        e = self.election
        assert e is not None
        d = self.decide_after_speculative(e.ballots, now)
        self._emit(
            "speculative-result",
            attempt=e.attempt,
            decision=d.action,
            reason=d.reason,
            term=d.term,
            delay=d.delay,
            ballots=sorted(e.ballots),
            vetoes=sorted(v for v, b in e.ballots.items() if b.would_veto),
        )
        if d.action == "abort":
            self._back_off(now)
        elif d.action == "sleep":
            self.slept = True
            self.election = None
            self.retry_at = now + d.delay
            self._set_role(Role.SECONDARY)
        else:
            self._begin_authoritative(d.term, now)

    def _begin_authoritative(self, term: int, now: int) -> None:
        e = self.election
        assert e is not None
        e.phase = "authoritative"
        e.term = term
        e.deadline = now + self.config.heartbeat_timeout
        self.term = term
        if self.ark:
            self._raise_max_voted(term)
        self.last_yes = now
        self._emit(
            "vote-cast",
            candidate=self.id,
            term=term,
            vote="yes",
            reason="self",
            max_voted=self.max_voted,
        )
        self._emit("election-start", phase="authoritative", attempt=e.attempt, term=term)
        self._broadcast(VoteRequest(self.id, e.attempt, term, self.last_gtid))
        self._maybe_finish_election(now)

    def on_vote_request(self, msg: VoteRequest, now: int) -> VoteReply:
        self.now = now
        mine = self.last_gtid
        if self.ark:
            self._observe_term(msg.term)
            if gtid_lt(msg.candidate_last, mine):
                vote, reason = "veto", "candidate behind"
            elif msg.term <= self.max_voted:
                vote, reason = "no", "already voted"
            elif (
                self.config.voter_cooldown
                and self.last_yes is not None
                and now - self.last_yes < self.config.voter_cooldown
            ):
                vote, reason = "no", "cooldown"
            else:
                vote, reason = "yes", ""
        elif self._sees_primary(now, msg.sender):
            vote, reason = "veto", "primary exists"
        elif self.last_yes is not None and now - self.last_yes < self.config.legacy_vote_cooldown:
            vote, reason = "no", "cooldown"
        else:
            vote, reason = "yes", ""

        if vote == "yes":
            if self.ark:
                self._raise_max_voted(msg.term)
            self.last_yes = now
            if self.role is Role.CANDIDATE and self.election is not None:
                if self.election.phase == "speculative":
                    self._emit("election-abandoned", attempt=self.election.attempt)
                    self._back_off(now)
        self._emit(
            "vote-cast",
            candidate=msg.sender,
            term=msg.term,
            vote=vote,
            reason=reason,
            max_voted=self.max_voted,
        )
        reply = VoteReply(self.id, msg.attempt, msg.term, vote, reason)
        self._send(msg.sender, reply)
        return reply

    def on_vote_reply(self, msg: VoteReply, now: int) -> None:
        self.now = now
        e = self.election
        if self.role is not Role.CANDIDATE or e is None or e.phase != "authoritative":
            return
        if msg.attempt != e.attempt:
            return
        e.votes[msg.sender] = msg
        self._maybe_finish_election(now)

    def on_vote_replies(self, votes: dict[int, VoteReply], now: int) -> str:
        """Conclude the authoritative phase; returns ``"won"`` or ``"lost"``."""
        self.now = now
        e = self.election
        assert e is not None and e.phase == "authoritative"
        yes = 1 + sum(1 for v in votes.values() if v.vote == "yes")
        vetoes = sorted(p for p, v in votes.items() if v.vote == "veto")
        won = yes >= self.majority and not vetoes
        if self.ark and self.max_voted != e.term:
            won = False  # voted Yes for a later election meanwhile
        if not won:
            reason = "veto" if vetoes else ("superseded" if yes >= self.majority else "no quorum")
            self._emit("election-lost", term=e.term, yes=yes, vetoes=vetoes, reason=reason)
            self.term = 0
            self._back_off(now)
            return "lost"
        voters = sorted([self.id] + [p for p, v in votes.items() if v.vote == "yes"])
        self.election = None
        self.slept = False
        self.disk.next_opid = 0
        self.acked = {}
        self.pending = []
        self.pull = None
        self.sync_source = None
        self.ack_watermark = self.last_gtid
        self._emit("election-won", term=e.term, voters=voters, last=gtid_json(self.last_gtid))
        self._set_role(Role.PRIMARY)
        self.last_primary_seen = now
        self._broadcast(HeartbeatRequest(self.id))
        self._send_heartbeats()
        self.next_heartbeat = now + self.config.heartbeat_period
        if self.ark and self.max_known > self.term:
            self.step_down("newer term known", now)
        return "won"

    def step_down(self, reason: str, now: int) -> None:
        self.now = now
        if self.role is not Role.PRIMARY:
            return
        for w in self.pending:
            self._complete(w, "stepped_down")
        self.pending = []
        self.acked = {}
        self._emit("step-down", term=self.term, reason=reason)
        self._set_role(Role.SECONDARY)
        self.term = 0
        self.last_primary_seen = now
        self.next_pull_at = now

    # ------------------------------------------------------------------ replication

    def choose_sync_source(self, now: int) -> Optional[int]:
        mine = self.last_gtid
        best: Optional[int] = None
        for pid in sorted(self.peers):
            pv = self.peers[pid]
            if not self.reachable(pid, now) or not gtid_lt(mine, pv.last_gtid):
                continue
            if self.sync_blacklist.get(pid, -1) > now:
                continue
            if best is None or pv.last_gtid > self.peers[best].last_gtid:  # type: ignore[operator]
                best = pid
        return best

    def _maybe_pull(self, now: int) -> None:
        if self.pull is not None:
            if now - self.pull.sent_at < self.config.heartbeat_period:
                return
            # unanswered: the link to the source is likely one-way
            self.sync_blacklist[self.pull.source] = now + self.config.heartbeat_timeout
            self.pull = None
        if now < self.next_pull_at:
            return
        src = self.choose_sync_source(now)
        cur = self.sync_source
        if (
            cur is not None
            and self.reachable(cur, now)
            and self.sync_blacklist.get(cur, -1) <= now
            and not gtid_lt(self.peers[cur].last_gtid, self.last_gtid)
            and (src is None or not gtid_lt(self.peers[cur].last_gtid, self.peers[src].last_gtid))
        ):
            src = cur  # keep tailing a source that is not behind
        if src != self.sync_source:
            self.sync_source = src
            self._emit("sync-source", source=src)
        if src is None:
            self.next_pull_at = now + self.config.sync_interval
            return
        self.pull = OutstandingPull(src, self.last_gtid, now)
        self._send(src, SyncPull(self.id, self.last_gtid))

    def on_sync_pull(self, msg: SyncPull, now: int) -> Message:
        self.now = now
        last = self.last_gtid
        if msg.after is None or msg.after in self.oplog:
            entries = tuple(self.oplog.after(msg.after, self.config.sync_batch))
            reply: Message = SyncEntries(self.id, msg.after, entries, last)
        else:
            reply = SyncDiverged(self.id, msg.after, last, tuple(self.oplog.gtids()))
        self._send(msg.sender, reply)
        return reply

    def _accept_sync_reply(self, msg: SyncEntries | SyncDiverged) -> bool:
        p = self.pull
        if self.role is not Role.SECONDARY or p is None:
            return False
        if msg.sender != p.source or msg.after != p.after or msg.after != self.last_gtid:
            return False
        self.pull = None
        pv = self.peers[msg.sender]
        if gtid_lt(pv.last_gtid, msg.source_last):
            pv.last_gtid = msg.source_last
        return True

    def on_sync_entries(self, msg: SyncEntries, now: int) -> None:
        self.now = now
        if not self._accept_sync_reply(msg):
            return
        for e in msg.entries:
            undo = self.store.apply(e.op)
            self._append(OplogEntry(e.gtid, e.op, undo, e.client), msg.sender)
            if self.ark and e.gtid.term > self.max_voted:
                self._raise_max_voted(e.gtid.term)
        self._advance_ack_watermark()
        self._report_position()
        if msg.entries:
            self.next_pull_at = now
        else:
            self.next_pull_at = now + self.config.sync_interval

    def on_sync_diverged(self, msg: SyncDiverged, now: int) -> None:
        self.now = now
        if not self._accept_sync_reply(msg):
            return
        if gtid_lt(self.last_gtid, msg.source_last):
            self.rollback_to_match(msg.summary, msg.sender)
            self.next_pull_at = now
        else:
            self.next_pull_at = now + self.config.sync_interval

    def rollback_to_match(self, source_summary, source: Optional[int] = None) -> list[OplogEntry]:
        """Undo local entries past the longest prefix shared with the source."""
        if self.role is Role.PRIMARY:
            raise ProtocolError("a primary never rolls back its own log")
        keep = find_divergence(self.oplog.gtids(), list(source_summary))
        if keep == len(self.oplog):
            return []
        removed = self.oplog.truncate_after(keep)
        for e in removed:
            self.store.revert(e.undo)
        tail = self.last_gtid
        if gtid_lt(tail, self.ack_watermark):
            self.ack_watermark = tail
        self._emit(
            "rollback",
            removed=[gtid_json(e.gtid) for e in removed],
            clients=[e.client for e in removed],
            prefix_len=keep,
            source=source,
        )
        return removed

    def _advance_ack_watermark(self) -> Optional[GTID]:
        tail = self.last_gtid
        if tail is None:
            return self.ack_watermark
        if self.ark and tail.term != self.max_voted:
            return self.ack_watermark
        if tail != self.ack_watermark:
            self.ack_watermark = tail
            self._emit("ack-advance", gtid=gtid_json(tail), max_voted=self.max_voted)
        return self.ack_watermark

    def _report_position(self) -> None:
        if self.role is Role.SECONDARY and self.sync_source is not None:
            self._send(
                self.sync_source,
                PositionReport(self.id, self.id, self.ack_watermark, self.max_voted),
            )

    def on_position_report(self, msg: PositionReport, now: int) -> bool:
        """Record or relay a downstream acknowledgement; False when rejected."""
        self.now = now
        if msg.reporter not in self.peers:
            return False
        self._observe_term(msg.max_voted)
        if self.role is Role.PRIMARY:
            g = msg.synced
            if g is None or g not in self.oplog:
                return False
            if self.ark and (msg.max_voted != self.term or g.term != self.term):
                return False
            prev = self.acked.get(msg.reporter)
            if prev is None or g > prev:
                self.acked[msg.reporter] = g
                self._check_waits()
            return True
        if self.sync_source is not None and msg.hops < len(self.peers):
            self._send(
                self.sync_source,
                PositionReport(self.id, msg.reporter, msg.synced, msg.max_voted, msg.hops + 1),
            )
        return True

    # ------------------------------------------------------------------ dispatch

    def receive(self, msg: Message, now: int) -> None:
        handler = _HANDLERS[type(msg)]
        handler(self, msg, now)

    def snapshot(self) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "term": self.term,
            "max_voted": self.max_voted,
            "max_known": self.max_known,
            "oplog": [
                [e.gtid.term, e.gtid.opid, e.client, e.op.to_json()] for e in self.oplog
            ],
            "store": self.store.snapshot(),
            "ack_watermark": gtid_json(self.ack_watermark),
        }


_HANDLERS = {
    Heartbeat: ReplicaNode.on_heartbeat,
    HeartbeatRequest: ReplicaNode.on_heartbeat_request,
    SpeculativeRequest: ReplicaNode.on_speculative_request,
    SpeculativeReply: ReplicaNode.on_speculative_reply,
    VoteRequest: ReplicaNode.on_vote_request,
    VoteReply: ReplicaNode.on_vote_reply,
    SyncPull: ReplicaNode.on_sync_pull,
    SyncEntries: ReplicaNode.on_sync_entries,
    SyncDiverged: ReplicaNode.on_sync_diverged,
    PositionReport: ReplicaNode.on_position_report,
}
