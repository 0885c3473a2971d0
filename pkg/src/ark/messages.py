"""Wire messages exchanged between replicas. Every message names its sender."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Optional, Union

from ark.core import GTID
from ark.oplog import OplogEntry


@dataclass(frozen=True, slots=True)
class Heartbeat:
    sender: int
    role: str
    term: int  # election term while primary, else 0
    last_gtid: Optional[GTID]
    max_voted: int
    max_known: int


@dataclass(frozen=True, slots=True)
class HeartbeatRequest:
    sender: int


@dataclass(frozen=True, slots=True)
class SpeculativeRequest:
    sender: int
    attempt: int
    candidate_last: Optional[GTID]


@dataclass(frozen=True, slots=True)
class SpeculativeReply:
    sender: int
    attempt: int
    would_veto: bool
    veto_reason: str
    max_voted: int
    voter_last: Optional[GTID]
    legacy_would_refuse: bool = False


@dataclass(frozen=True, slots=True)
class VoteRequest:
    sender: int
    attempt: int
    term: int
    candidate_last: Optional[GTID]


@dataclass(frozen=True, slots=True)
class VoteReply:
    sender: int
    attempt: int
    term: int
    vote: str  # "yes" | "no" | "veto"
    reason: str = ""


@dataclass(frozen=True, slots=True)
class SyncPull:
    sender: int
    after: Optional[GTID]


@dataclass(frozen=True, slots=True)
class SyncEntries:
    sender: int
    after: Optional[GTID]
    entries: tuple[OplogEntry, ...]
    source_last: Optional[GTID]


@dataclass(frozen=True, slots=True)
class SyncDiverged:
    sender: int
    after: Optional[GTID]
    source_last: Optional[GTID]
    summary: tuple[GTID, ...]


@dataclass(frozen=True, slots=True)
class PositionReport:
    sender: int
    reporter: int
    synced: Optional[GTID]
    max_voted: int
    hops: int = 0


Message = Union[
    Heartbeat,
    HeartbeatRequest,
    SpeculativeRequest,
    SpeculativeReply,
    VoteRequest,
    VoteReply,
    SyncPull,
    SyncEntries,
    SyncDiverged,
    PositionReport,
]


def describe(msg: Message) -> dict[str, Any]:
    """JSON-ready summary of a message for trace records."""
    out: dict[str, Any] = {"type": type(msg).__name__}
    for f in fields(msg):
        v = getattr(msg, f.name)
        if f.name == "entries":
            v = [list(e.gtid) for e in v]
        elif f.name == "summary":
            v = len(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out
