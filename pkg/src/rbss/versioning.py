"""Version vectors and the causal relations the synchronization protocols use.

A version vector maps replica identifiers to update counters. Absent entries
count as zero and are never stored, so `[a:1]` and `[a:1,b:0]` are equal.

Example:
    va = VersionVector({"a": 5, "b": 2})
    vb = increment(VersionVector(), "b")   # [b:1]
    join(va, vb)                           # [a:5,b:2]
    over(va, vb)                           # True, a5 > a0

"""

import re
from collections.abc import Iterable, Iterator, Mapping
from enum import Enum

ReplicaId = str

_ENTRY = re.compile(r"^\s*([^\s:,\[\]]+)\s*:\s*(\d+)\s*$")


class Ordering(Enum):
    """Outcome of comparing two version vectors."""

    EQUAL = "equal"
    BEFORE = "before"
    AFTER = "after"
    CONCURRENT = "concurrent"


class VersionVector:
    """Immutable association from replica identifier to update counter."""

    __slots__ = ("_counters", "_hash")

    def __init__(
        self, counters: Mapping[ReplicaId, int] | Iterable[tuple[ReplicaId, int]] = ()
    ) -> None:
        """Create a vector, dropping zero entries.

        Raises:
            ValueError: If an identifier is empty or a counter is negative

        """
        items = counters.items() if isinstance(counters, Mapping) else counters
        cleaned: dict[ReplicaId, int] = {}
        for rid, count in items:
            if not rid:
                msg = "Replica identifiers must be non-empty"
                raise ValueError(msg)
            if count < 0:
                msg = f"Negative counter {count} for replica {rid}"
                raise ValueError(msg)
            if count:
                cleaned[rid] = count
        self._counters = dict(sorted(cleaned.items()))
        self._hash: int | None = None

    def __getitem__(self, rid: ReplicaId) -> int:
        return self._counters.get(rid, 0)

    def __iter__(self) -> Iterator[ReplicaId]:
        return iter(self._counters)

    def __len__(self) -> int:
        return len(self._counters)

    def __bool__(self) -> bool:
        return bool(self._counters)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VersionVector):
            return NotImplemented
        return self._counters == other._counters

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(tuple(self._counters.items()))
        return self._hash

    def __le__(self, other: "VersionVector") -> bool:
        """Pointwise less-or-equal."""
        return not over(self, other)

    def __ge__(self, other: "VersionVector") -> bool:
        """Pointwise greater-or-equal."""
        return not over(other, self)

    def __repr__(self) -> str:
        return f"VersionVector({self.render()})"

    def __str__(self) -> str:
        return self.render()

    def items(self) -> Iterator[tuple[ReplicaId, int]]:
        """Non-zero entries sorted by replica identifier."""
        return iter(self._counters.items())

    def as_dict(self) -> dict[ReplicaId, int]:
        """Copy of the non-zero entries."""
        return dict(self._counters)

    def render(self) -> str:
        """Canonical text form, e.g. `[a:5,b:2]`."""
        return "[" + ",".join(f"{k}:{v}" for k, v in self._counters.items()) + "]"

    @classmethod
    def parse(cls, text: str) -> "VersionVector":
        """Parse the canonical text form produced by `render`.

        Raises:
            ValueError: If the text is not a bracketed `id:counter` list

        """
        body = text.strip()
        if not (body.startswith("[") and body.endswith("]")):
            msg = f"Version vector must be bracketed: {text!r}"
            raise ValueError(msg)

        body = body[1:-1].strip()
        if not body:
            return cls()

        entries: dict[ReplicaId, int] = {}
        for part in body.split(","):
            match = _ENTRY.match(part)
            if match is None:
                msg = f"Malformed version vector entry {part!r} in {text!r}"
                raise ValueError(msg)
            entries[match.group(1)] = int(match.group(2))
        return cls(entries)


def increment(vv: VersionVector, rid: ReplicaId) -> VersionVector:
    """Return a copy of `vv` with the entry of `rid` increased by one."""
    counters = vv.as_dict()
    counters[rid] = counters.get(rid, 0) + 1
    return VersionVector(counters)


def join(a: VersionVector, b: VersionVector) -> VersionVector:
    """Pointwise max of both vectors."""
    counters = a.as_dict()
    for rid, count in b.items():
        counters[rid] = max(counters.get(rid, 0), count)
    return VersionVector(counters)


def join_all(vectors: Iterable[VersionVector]) -> VersionVector:
    """Pointwise max of any number of vectors (empty input gives `[]`)."""
    counters: dict[ReplicaId, int] = {}
    for vv in vectors:
        for rid, count in vv.items():
            counters[rid] = max(counters.get(rid, 0), count)
    return VersionVector(counters)


def over(a: VersionVector, b: VersionVector) -> bool:
    """True iff some entry of `a` is strictly greater than in `b`.

    `a` could then be used to inflate a state characterized by `b`.
    """
    return any(count > b[rid] for rid, count in a.items())


def dominates(a: VersionVector, b: VersionVector) -> bool:
    """True iff `a` is pointwise >= `b` with at least one strict entry."""
    return over(a, b) and not over(b, a)


def concurrent(a: VersionVector, b: VersionVector) -> bool:
    """True iff each vector has an entry strictly greater than the other."""
    return over(a, b) and over(b, a)


def compare(a: VersionVector, b: VersionVector) -> Ordering:
    """Classify the pair; exactly one ordering holds."""
    a_over = over(a, b)
    b_over = over(b, a)
    if a_over and b_over:
        return Ordering.CONCURRENT
    if a_over:
        return Ordering.AFTER
    if b_over:
        return Ordering.BEFORE
    return Ordering.EQUAL


def total(vv: VersionVector) -> int:
    """Sum of all counters."""
    return sum(count for _, count in vv.items())
