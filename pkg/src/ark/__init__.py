"""Ark: term-based elections and acknowledgement rules for pull-replicated replica sets.

The package simulates a MongoDB/TokuMX-style replica set under either the
legacy election protocol or Ark, and checks the resulting traces for the
safety properties that distinguish the two.
"""

from ark.core import (
    GTID,
    Member,
    ProtocolMode,
    ReplicaSetConfig,
    WriteConcern,
    compare_gtid,
    majority_of,
    write_concern_satisfied,
)
from ark.oplog import Oplog, OplogEntry
from ark.statemachine import KvOp, KvStore, UndoRecord

__all__ = [
    "GTID",
    "KvOp",
    "KvStore",
    "Member",
    "Oplog",
    "OplogEntry",
    "ProtocolMode",
    "ReplicaSetConfig",
    "UndoRecord",
    "WriteConcern",
    "compare_gtid",
    "majority_of",
    "write_concern_satisfied",
]
