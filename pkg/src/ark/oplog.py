"""The per-replica operation log."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from ark.core import GTID
from ark.statemachine import KvOp, UndoRecord


class OplogError(Exception):
    """An oplog mutation that no correct protocol run can request."""


@dataclass(frozen=True)
class OplogEntry:
    gtid: GTID
    op: KvOp
    undo: UndoRecord
    client: str = ""

    @property
    def term(self) -> int:
        return self.gtid.term


class Oplog:
    """GTID-ordered entries with an index for membership tests."""

    def __init__(self, entries: Sequence[OplogEntry] = ()):
        self.entries: list[OplogEntry] = []
        self._pos: dict[GTID, int] = {}
        for e in entries:
            self.append(e)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[OplogEntry]:
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __contains__(self, gtid: object) -> bool:
        return gtid in self._pos

    def append(self, entry: OplogEntry) -> None:
        last = self.last_gtid()
        if last is not None and not entry.gtid > last:
            raise OplogError(f"append of {entry.gtid} after {last}")
        self._pos[entry.gtid] = len(self.entries)
        self.entries.append(entry)

    def last_gtid(self) -> Optional[GTID]:
        return self.entries[-1].gtid if self.entries else None

    def position(self, gtid: GTID) -> int:
        """Index of ``gtid``; raises KeyError when absent."""
        return self._pos[gtid]

    def gtids(self) -> list[GTID]:
        return [e.gtid for e in self.entries]

    def after(self, gtid: Optional[GTID], limit: int) -> list[OplogEntry]:
        start = 0 if gtid is None else self._pos[gtid] + 1
        return self.entries[start : start + limit]

    def truncate_after(self, prefix_len: int) -> list[OplogEntry]:
        """Cut the log to ``prefix_len`` entries; returns the removed ones newest-first."""
        if not 0 <= prefix_len <= len(self.entries):
            raise OplogError(f"cannot truncate {len(self.entries)} entries to {prefix_len}")
        removed = self.entries[prefix_len:]
        del self.entries[prefix_len:]
        for e in removed:
            del self._pos[e.gtid]
        removed.reverse()
        return removed


def find_divergence(local: Sequence[GTID], source: Sequence[GTID]) -> int:
    """Length of the longest common prefix of ``local`` and the source's GTIDs.

    ``source`` may be the source's full sequence or a suffix of it that reaches
    back past the point where the two histories agree. A result equal to
    ``len(local)`` means the local log is a prefix of the source.
    """
    if not source or not local:
        return 0
    start = 0
    if source[0] != local[0]:
        try:
            start = list(local).index(source[0])
        except ValueError:
            return 0
    n = start
    for a, b in zip(local[start:], source):
        if a != b:
            break
        n += 1
    return n
