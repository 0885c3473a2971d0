"""Identifiers, ordering, quorum arithmetic and write concerns."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Mapping, NamedTuple, Optional

U64_MAX = 2**64 - 1


class GTID(NamedTuple):
    """Oplog position: compared lexicographically on (term, opid)."""

    term: int
    opid: int

    def __str__(self) -> str:
        return f"<{self.term},{self.opid}>"

    @classmethod
    def parse(cls, obj: Any) -> Optional["GTID"]:
        if obj is None:
            return None
        term, opid = obj
        if not (0 <= term <= U64_MAX and 0 <= opid <= U64_MAX):
            raise ValueError(f"GTID component out of range: {obj!r}")
        return cls(int(term), int(opid))


def compare_gtid(a: GTID, b: GTID) -> int:
    """Return -1, 0 or 1 as ``a`` is less than, equal to or greater than ``b``."""
    a_key = (a.term, a.opid)
    b_key = (b.term, b.opid)
    return (a_key > b_key) - (a_key < b_key)


def majority_of(n: int) -> int:
    if n < 1:
        raise ValueError("a replica set has at least one member")
    return n // 2 + 1


class ProtocolMode(str, enum.Enum):
    ARK = "ark"
    LEGACY = "legacy"


@dataclass(frozen=True)
class Member:
    id: int
    group: Optional[str] = None
    # priority-0 members vote and replicate but never stand for election
    electable: bool = True


@dataclass(frozen=True)
class WriteConcern:
    """How many acknowledgements a write needs before the client is told it succeeded.

    ``kind`` is ``"count"`` (``n`` acknowledgers, the primary included),
    ``"majority"``, or ``"tags"`` (``tags`` maps group label to a minimum count).
    """

    kind: str
    n: int = 0
    tags: tuple[tuple[str, int], ...] = ()

    @classmethod
    def count(cls, n: int) -> "WriteConcern":
        if n < 1:
            raise ValueError("Count write concern needs n >= 1")
        return cls("count", n=n)

    @classmethod
    def majority(cls) -> "WriteConcern":
        return cls("majority")

    @classmethod
    def tag_minimum(cls, tags: Mapping[str, int]) -> "WriteConcern":
        if not tags:
            raise ValueError("TagMinimum needs at least one group")
        if any(v < 1 for v in tags.values()):
            raise ValueError("TagMinimum counts must be positive")
        return cls("tags", tags=tuple(sorted(tags.items())))

    @classmethod
    def parse(cls, obj: Any) -> "WriteConcern":
        """Accepts ``"majority"``, a positive int, or a ``{group: count}`` mapping."""
        if obj == "majority":
            return cls.majority()
        if isinstance(obj, bool):
            raise ValueError(f"bad write concern {obj!r}")
        if isinstance(obj, int):
            return cls.count(obj)
        if isinstance(obj, Mapping):
            return cls.tag_minimum({str(k): int(v) for k, v in obj.items()})
        raise ValueError(f"bad write concern {obj!r}")

    def to_json(self) -> Any:
        if self.kind == "majority":
            return "majority"
        if self.kind == "count":
            return self.n
        return dict(self.tags)

    @property
    def is_majority(self) -> bool:
        return self.kind == "majority"


def write_concern_satisfied(
    wc: WriteConcern, acks: Iterable[int], config: "ReplicaSetConfig"
) -> bool:
    acks = set(acks)
    unknown = acks - set(config.member_ids)
    if unknown:
        raise ValueError(f"acknowledgements from non-members {sorted(unknown)}")
    if wc.kind == "count":
        return len(acks) >= wc.n
    if wc.kind == "majority":
        return len(acks) >= majority_of(len(config.members))
    groups = {m.group for m in config.members}
    per_group = Counter(config.group_of(a) for a in acks)
    for group, minimum in wc.tags:
        if group not in groups:
            raise ValueError(f"write concern names unknown group {group!r}")
        if per_group[group] < minimum:
            return False
    return True


@dataclass(frozen=True)
class ReplicaSetConfig:
    members: tuple[Member, ...]
    heartbeat_period: int = 2000
    heartbeat_timeout: int = 10000
    election_sleep_min: int = 50
    election_sleep_max: int = 1050
    mode: ProtocolMode = ProtocolMode.ARK
    legacy_vote_cooldown: int = 30000
    # minimum gap between a node's own election attempts; 0 disables
    election_min_interval: int = 0
    # minimum gap between two Yes votes from the same Ark voter; 0 disables
    voter_cooldown: int = 0
    sync_interval: int = 200
    sync_batch: int = 64
    _groups: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("replica set needs at least one member")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate member ids in {ids}")
        if any(i < 0 for i in ids):
            raise ValueError("member ids must be non-negative")
        if not self.election_sleep_min < self.election_sleep_max:
            raise ValueError("election_sleep_min must be below election_sleep_max")
        if self.heartbeat_period <= 0 or self.heartbeat_timeout <= 0:
            raise ValueError("heartbeat period and timeout must be positive")
        object.__setattr__(self, "mode", ProtocolMode(self.mode))
        object.__setattr__(self, "_groups", {m.id: m.group for m in self.members})

    @property
    def member_ids(self) -> list[int]:
        return [m.id for m in self.members]

    @property
    def majority(self) -> int:
        return majority_of(len(self.members))

    def group_of(self, node_id: int) -> Optional[str]:
        return self._groups[node_id]

    def member(self, node_id: int) -> Member:
        for m in self.members:
            if m.id == node_id:
                return m
        raise KeyError(node_id)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReplicaSetConfig":
        d = dict(d)
        raw = d.pop("members")
        if isinstance(raw, int):
            members = tuple(Member(i) for i in range(raw))
        else:
            members = tuple(
                Member(int(m["id"]), m.get("group"), bool(m.get("electable", True)))
                if isinstance(m, Mapping)
                else Member(int(m))
                for m in raw
            )
        known = {f.name for f in fields(cls)} - {"members", "_groups"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(members=members, **d)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "members": [
                {"id": m.id, "group": m.group, "electable": m.electable}
                for m in self.members
            ]
        }
        for f in fields(self):
            if f.name in ("members", "_groups"):
                continue
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else v
        return out
