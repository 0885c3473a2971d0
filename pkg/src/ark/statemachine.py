"""Replicated user data: a flat string map whose every operation can be undone."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional


@dataclass(frozen=True)
class KvOp:
    kind: str  # "set" | "delete"
    key: str
    value: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind == "set":
            if self.value is None:
                raise ValueError("set needs a value")
        elif self.kind == "delete":
            if self.value is not None:
                raise ValueError("delete takes no value")
        else:
            raise ValueError(f"unknown op kind {self.kind!r}")

    @classmethod
    def set(cls, key: str, value: str) -> "KvOp":
        return cls("set", key, value)

    @classmethod
    def delete(cls, key: str) -> "KvOp":
        return cls("delete", key)

    def to_json(self) -> list[Any]:
        return [self.kind, self.key, self.value]

    @classmethod
    def from_json(cls, obj: Any) -> "KvOp":
        kind, key, value = obj
        return cls(kind, key, value)


@dataclass(frozen=True)
class UndoRecord:
    """Restores ``key`` to ``prior`` (``None`` meaning the key was absent)."""

    key: str
    prior: Optional[str]


class KvStore:
    def __init__(self, data: Optional[dict[str, str]] = None):
        self.data: dict[str, str] = dict(data or {})

    def apply(self, op: KvOp) -> UndoRecord:
        undo = UndoRecord(op.key, self.data.get(op.key))
        if op.kind == "set":
            self.data[op.key] = op.value  # type: ignore[assignment]
        else:
            self.data.pop(op.key, None)
        return undo

    def revert(self, undo: UndoRecord) -> None:
        if undo.prior is None:
            self.data.pop(undo.key, None)
        else:
            self.data[undo.key] = undo.prior

    def snapshot(self) -> dict[str, str]:
        return dict(self.data)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, KvStore):
            return self.data == other.data
        return NotImplemented

    def __repr__(self) -> str:
        return f"KvStore({self.data!r})"
