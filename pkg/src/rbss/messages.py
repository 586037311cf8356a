"""Message payloads exchanged between replica and relay nodes."""

from dataclasses import dataclass
from enum import Enum

from rbss.versioning import VersionVector, total

_VV_ENTRY_BYTES = 12


class NodeKind(str, Enum):
    """Role announced in the discovery hello."""

    REPLICA = "replica"
    RELAY = "relay"


@dataclass(frozen=True, slots=True)
class StateRecord:
    """Opaque serialized state paired with its version vector."""

    blob: bytes
    vv: VersionVector

    def sort_key(self) -> tuple[int, str]:
        """Transmission order: larger states first, ties by rendering."""
        return -total(self.vv), self.vv.render()

    def __repr__(self) -> str:
        return f"StateRecord({self.vv.render()}, {len(self.blob)} bytes)"


@dataclass(frozen=True, slots=True)
class Hello:
    """Discovery announcement carrying the sender's role."""

    kind: NodeKind


@dataclass(frozen=True, slots=True)
class VectorMsg:
    """Version vector of a replica."""

    vv: VersionVector


@dataclass(frozen=True, slots=True)
class VaggMsg:
    """Aggregate version vector of a relay store."""

    vagg: VersionVector


@dataclass(frozen=True, slots=True)
class StateMsg:
    """One serialized state, or an empty contribution when `record` is None.

    `last` is only meaningful from a relay to a replica: it marks the final
    contribution of a session, after which the replica returns its state.
    """

    record: StateRecord | None = None
    last: bool = False


@dataclass(frozen=True, slots=True)
class BundleMsg:
    """Every selected state in a single message (basic protocol)."""

    records: tuple[StateRecord, ...] = ()


@dataclass(frozen=True, slots=True)
class InflationNotice:
    """Tells a neighbor the sender's state grew, so it returns its vector."""


Payload = Hello | VectorMsg | VaggMsg | StateMsg | BundleMsg | InflationNotice


@dataclass(frozen=True, slots=True)
class Outbound:
    """A payload a handler wants transmitted to a neighbor."""

    dst: str
    payload: Payload


def _vv_size(vv: VersionVector) -> int:
    return _VV_ENTRY_BYTES * len(vv)


def payload_size(payload: Payload) -> int:
    """Approximate wire size in bytes, used by the latency size factor."""
    match payload:
        case VectorMsg(vv=vv):
            return _vv_size(vv)
        case VaggMsg(vagg=vagg):
            return _vv_size(vagg)
        case StateMsg(record=None):
            return 1
        case StateMsg(record=StateRecord(blob=blob, vv=vv)):
            return len(blob) + _vv_size(vv) + 1
        case BundleMsg(records=records):
            return sum(len(r.blob) + _vv_size(r.vv) for r in records) + 1
        case _:
            return 1


def describe(payload: Payload) -> str:
    """Short rendering for logs."""
    match payload:
        case VectorMsg(vv=vv):
            return f"vv {vv.render()}"
        case VaggMsg(vagg=vagg):
            return f"vagg {vagg.render()}"
        case StateMsg(record=None, last=last):
            return f"empty contribution last={last}"
        case StateMsg(record=StateRecord(vv=vv), last=last):
            return f"state {vv.render()} last={last}"
        case BundleMsg(records=records):
            return f"bundle of {len(records)}"
        case InflationNotice():
            return "inflation notice"
        case Hello(kind=kind):
            return f"hello {kind.value}"
    return type(payload).__name__
