"""Minimal CRDT facade expected by the synchronization layer, with two reference CRDTs.

The facade only needs three things from a CRDT library: a serialized copy of
the local state, a way to merge a serialized state received from a peer, and
a notification whenever a local update is issued. Serialized states are
opaque bytes everywhere outside this module.

Blob layout (all integers big-endian):

    magic       4 bytes   b"GCT1" or b"ORM1"
    ...         type specific, see `GrowOnlyCounter` and `ObservedRemoveMap`

Strings are encoded as `!I` length + UTF-8 bytes. Collections are written in
sorted order, so equal states always produce identical blobs.
"""

import json
import struct
from abc import ABC, abstractmethod
from collections.abc import Callable
from enum import Enum

from exceptions import DecodeError

SerializedState = bytes
Value = str | int
Tag = tuple[str, int]

GCOUNTER_MAGIC = b"GCT1"
ORMAP_MAGIC = b"ORM1"

_U32 = struct.Struct("!I")
_U64 = struct.Struct("!Q")
_I64 = struct.Struct("!q")


class Semantics(Enum):
    """Concurrency semantics of an observed-remove map."""

    SET_WINS = 0
    DEL_WINS = 1


class Crdt(ABC):
    """Facade of a state-based CRDT replica."""

    def __init__(self, replica_id: str) -> None:
        """Bind the CRDT to the replica issuing its local updates."""
        if not replica_id:
            msg = "A CRDT replica needs a non-empty replica id"
            raise ValueError(msg)
        self._replica_id = replica_id
        self._listeners: list[Callable[[], None]] = []

    @property
    def replica_id(self) -> str:
        """Identifier of the replica issuing local updates."""
        return self._replica_id

    def subscribe(self, listener: Callable[[], None]) -> None:
        """Register a callback fired after every local update."""
        self._listeners.append(listener)

    def _updated(self) -> None:
        for listener in self._listeners:
            listener()

    @abstractmethod
    def get_serialized_state(self) -> SerializedState:
        """Return the canonical serialized form of the local state."""

    @abstractmethod
    def merge_serialized_state(self, blob: SerializedState) -> None:
        """Merge a serialized state received from a peer (inflation only).

        Raises:
            DecodeError: If the blob is not a valid state of this CRDT type

        """


class _Reader:
    """Cursor over a blob; every read failure becomes a DecodeError."""

    def __init__(self, blob: bytes) -> None:
        self._blob = blob
        self._pos = 0

    def take(self, size: int) -> bytes:
        end = self._pos + size
        if end > len(self._blob):
            msg = f"Truncated state: need {size} bytes at offset {self._pos}"
            raise DecodeError(msg)
        chunk = self._blob[self._pos : end]
        self._pos = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(_U64.size))[0]

    def i64(self) -> int:
        return _I64.unpack(self.take(_I64.size))[0]

    def text(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            msg = f"Invalid UTF-8 string in state: {e}"
            raise DecodeError(msg) from None

    def value(self) -> Value:
        kind = self.take(1)
        if kind == b"i":
            return self.i64()
        if kind == b"s":
            return self.text()
        msg = f"Unknown value type {kind!r}"
        raise DecodeError(msg)

    def tag(self) -> Tag:
        return self.text(), self.u64()

    def expect_magic(self, magic: bytes) -> None:
        found = self.take(len(magic))
        if found != magic:
            msg = f"Bad state header {found!r}, expected {magic!r}"
            raise DecodeError(msg)

    def finish(self) -> None:
        if self._pos != len(self._blob):
            msg = f"{len(self._blob) - self._pos} trailing bytes in state"
            raise DecodeError(msg)


def _text(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def _value(v: Value) -> bytes:
    if isinstance(v, bool) or not isinstance(v, int | str):
        msg = f"Map values must be str or int, got {type(v).__name__}"
        raise TypeError(msg)
    if isinstance(v, int):
        return b"i" + _I64.pack(v)
    return b"s" + _text(v)


def _tag(t: Tag) -> bytes:
    return _text(t[0]) + _U64.pack(t[1])


def _value_order(v: Value) -> tuple[int, int | str]:
    return (0, v) if isinstance(v, int) else (1, v)


class GrowOnlyCounter(Crdt):
    """Grow-only counter: one contribution per replica, merge is pointwise max.

    Layout after the magic: `!I` entry count, then per replica (sorted)
    the replica id string and its contribution as `!Q`.
    """

    def __init__(self, replica_id: str) -> None:
        """Create an empty counter."""
        super().__init__(replica_id)
        self._counts: dict[str, int] = {}

    @classmethod
    def from_counts(cls, replica_id: str, counts: dict[str, int]) -> "GrowOnlyCounter":
        """Create a counter that already holds the given contributions."""
        counter = cls(replica_id)
        counter._counts = {k: v for k, v in counts.items() if v > 0}
        return counter

    @property
    def value(self) -> int:
        """Sum of all contributions."""
        return sum(self._counts.values())

    @property
    def counts(self) -> dict[str, int]:
        """Copy of the per-replica contributions."""
        return dict(self._counts)

    def increment(self, amount: int = 1) -> None:
        """Add to the local contribution."""
        if amount <= 0:
            msg = "A grow-only counter only accepts positive increments"
            raise ValueError(msg)
        self._counts[self.replica_id] = self._counts.get(self.replica_id, 0) + amount
        self._updated()

    def merge(self, other: "GrowOnlyCounter") -> None:
        """Least upper bound with another counter."""
        for rid, count in other._counts.items():
            self._counts[rid] = max(self._counts.get(rid, 0), count)

    def get_serialized_state(self) -> SerializedState:
        """Return the canonical blob."""
        parts = [GCOUNTER_MAGIC, _U32.pack(len(self._counts))]
        for rid in sorted(self._counts):
            parts += [_text(rid), _U64.pack(self._counts[rid])]
        return b"".join(parts)

    @classmethod
    def decode(cls, replica_id: str, blob: SerializedState) -> "GrowOnlyCounter":
        """Build a counter from a blob."""
        reader = _Reader(blob)
        reader.expect_magic(GCOUNTER_MAGIC)
        counts = {}
        for _ in range(reader.u32()):
            rid = reader.text()
            counts[rid] = reader.u64()
        reader.finish()
        return cls.from_counts(replica_id, counts)

    def merge_serialized_state(self, blob: SerializedState) -> None:
        """Merge a serialized counter."""
        self.merge(self.decode(self.replica_id, blob))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrowOnlyCounter):
            return NotImplemented
        return self._counts == other._counts

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"GrowOnlyCounter({self.replica_id!r}, value={self.value})"


class ObservedRemoveMap(Crdt):
    """Observed-remove map with set-wins or del-wins concurrency semantics.

    Every `put` (map set) adds a `(value, tag)` pair under its key with a fresh tag
    `(replica_id, seq)`, and tombstones the tags it observed for that key.
    Every `delete` of a visible key tombstones the observed tags and records a
    removal tag. A key is visible when it has a live set tag and, under
    del-wins, no live removal tag. Merge is the union of all three sets.

    Layout after the magic: semantics byte, then three sections, each with a
    `!I` count: set entries (key, tag, value), removal entries (key, tag),
    tombstones (tag). All sections sorted.
    """

    def __init__(
        self, replica_id: str, semantics: Semantics = Semantics.SET_WINS
    ) -> None:
        """Create an empty map."""
        super().__init__(replica_id)
        self._semantics = semantics
        self._sets: dict[str, dict[Tag, Value]] = {}
        self._dels: dict[str, set[Tag]] = {}
        self._tombstones: set[Tag] = set()
        self._seq = 0

    @property
    def semantics(self) -> Semantics:
        """Concurrency semantics chosen at construction."""
        return self._semantics

    def _next_tag(self) -> Tag:
        self._seq += 1
        return self.replica_id, self._seq

    def _live(self, tags: dict[Tag, Value] | set[Tag]) -> list[Tag]:
        return sorted(t for t in tags if t not in self._tombstones)

    def put(self, key: str, value: Value) -> None:
        """Set `key` to `value`, superseding the tags observed for `key`."""
        _value(value)
        self._tombstones.update(self._live(self._sets.get(key, {})))
        self._tombstones.update(self._live(self._dels.get(key, set())))
        self._sets.setdefault(key, {})[self._next_tag()] = value
        self._updated()

    def delete(self, key: str) -> None:
        """Delete `key`; a no-op when the key is not visible locally."""
        live = self._live(self._sets.get(key, {}))
        if not live:
            return
        self._tombstones.update(live)
        self._dels.setdefault(key, set()).add(self._next_tag())
        self._updated()

    def get(self, key: str) -> Value | None:
        """Current value of `key`, or None when it is absent."""
        live = self._live(self._sets.get(key, {}))
        if not live:
            return None
        if self._semantics is Semantics.DEL_WINS and self._live(
            self._dels.get(key, set())
        ):
            return None
        # concurrent sets: highest (value, tag) wins, identically on every replica
        values = self._sets[key]
        winner = max(live, key=lambda t: (_value_order(values[t]), t))
        return values[winner]

    def items(self) -> dict[str, Value]:
        """Visible entries."""
        result = {}
        for key in sorted(self._sets):
            value = self.get(key)
            if value is not None:
                result[key] = value
        return result

    def merge(self, other: "ObservedRemoveMap") -> None:
        """Least upper bound with another map of the same semantics."""
        if other._semantics is not self._semantics:
            msg = "Cannot merge maps with different concurrency semantics"
            raise DecodeError(msg)
        for key, tags in other._sets.items():
            self._sets.setdefault(key, {}).update(tags)
        for key, tags in other._dels.items():
            self._dels.setdefault(key, set()).update(tags)
        self._tombstones |= other._tombstones
        own = [t[1] for t in self._all_tags() if t[0] == self.replica_id]
        self._seq = max([self._seq, *own])

    def _all_tags(self) -> list[Tag]:
        tags = [t for tags in self._sets.values() for t in tags]
        tags += [t for tags in self._dels.values() for t in tags]
        return tags

    def get_serialized_state(self) -> SerializedState:
        """Return the canonical blob."""
        sets = sorted(
            (key, tag, value)
            for key, tags in self._sets.items()
            for tag, value in tags.items()
        )
        dels = sorted((key, tag) for key, tags in self._dels.items() for tag in tags)
        parts = [ORMAP_MAGIC, bytes([self._semantics.value]), _U32.pack(len(sets))]
        parts += [_text(key) + _tag(tag) + _value(value) for key, tag, value in sets]
        parts.append(_U32.pack(len(dels)))
        parts += [_text(key) + _tag(tag) for key, tag in dels]
        parts.append(_U32.pack(len(self._tombstones)))
        parts += [_tag(tag) for tag in sorted(self._tombstones)]
        return b"".join(parts)

    @classmethod
    def decode(cls, replica_id: str, blob: SerializedState) -> "ObservedRemoveMap":
        """Build a map from a blob."""
        reader = _Reader(blob)
        reader.expect_magic(ORMAP_MAGIC)
        raw = reader.take(1)[0]
        try:
            semantics = Semantics(raw)
        except ValueError:
            msg = f"Unknown map semantics {raw}"
            raise DecodeError(msg) from None

        result = cls(replica_id, semantics)
        for _ in range(reader.u32()):
            key = reader.text()
            tag = reader.tag()
            result._sets.setdefault(key, {})[tag] = reader.value()
        for _ in range(reader.u32()):
            key = reader.text()
            result._dels.setdefault(key, set()).add(reader.tag())
        for _ in range(reader.u32()):
            result._tombstones.add(reader.tag())
        reader.finish()
        return result

    def merge_serialized_state(self, blob: SerializedState) -> None:
        """Merge a serialized map."""
        self.merge(self.decode(self.replica_id, blob))

    def to_json(self) -> str:
        """Debug rendering of the visible entries, used by test fixtures."""
        return json.dumps(self.items(), sort_keys=True, separators=(",", ":"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObservedRemoveMap):
            return NotImplemented
        return self.get_serialized_state() == other.get_serialized_state()

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"ObservedRemoveMap({self.replica_id!r}, {self.items()!r})"
