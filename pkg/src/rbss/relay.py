"""Relay side of the synchronization protocols.

A relay never decodes the states it carries. It keeps a store of mutually
concurrent states and their aggregate vector (`vagg`), and uses version
vectors only to decide what to keep and what to send.

With the enhanced protocol a relay sends selected states one by one. For
each peer it keeps a session: the vector the peer announced joined with the
vectors already sent to it, and the pending send set selected against that
view. Pending sets are selected again whenever the store changes.
"""

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from config import ProtocolConfig, Selection
from rbss.messages import (
    BundleMsg,
    InflationNotice,
    NodeKind,
    Outbound,
    Payload,
    StateMsg,
    StateRecord,
    VaggMsg,
    VectorMsg,
)
from rbss.node import Node
from rbss.selection import select_inflators
from rbss.versioning import Ordering, VersionVector, compare, dominates, join, join_all

logger = logging.getLogger(__name__)


class RelayStore:
    """Set of pairwise concurrent state records and their aggregate vector."""

    def __init__(self, records: Iterable[StateRecord] = ()) -> None:
        """Create a store, inserting `records` in order."""
        self._records: list[StateRecord] = []
        self._vagg = VersionVector()
        for record in records:
            self.insert(record)

    @property
    def vagg(self) -> VersionVector:
        """Pointwise max of all stored vectors."""
        return self._vagg

    @property
    def records(self) -> tuple[StateRecord, ...]:
        """Stored records in transmission order."""
        return tuple(self._records)

    def __iter__(self) -> Iterator[StateRecord]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, record: object) -> bool:
        return record in self._records

    def holds_only(self, vv: VersionVector) -> bool:
        """True iff the store is a single record with vector `vv`."""
        return len(self._records) == 1 and self._records[0].vv == vv

    def insert(self, record: StateRecord) -> bool:
        """Insert a record unless an equal or dominating one is stored.

        Stored records dominated by the new one are purged. Returns True if
        the store changed.
        """
        for stored in self._records:
            if stored.vv == record.vv or dominates(stored.vv, record.vv):
                return False

        self._records = [
            r for r in self._records if not dominates(record.vv, r.vv)
        ]
        self._records.append(record)
        self._records.sort(key=StateRecord.sort_key)
        self._vagg = join(self._vagg, record.vv)
        return True

    def replace(self, record: StateRecord) -> bool:
        """Make `record` the only stored state; True if the store changed."""
        if self.holds_only(record.vv):
            return False
        self._records = [record]
        self._vagg = record.vv
        return True

    def check_vagg(self) -> bool:
        """True iff vagg is the join of the stored vectors."""
        return self._vagg == join_all(r.vv for r in self._records)

    def __repr__(self) -> str:
        rendered = [r.vv.render() for r in self._records]
        return f"RelayStore({rendered}, vagg={self._vagg})"


@dataclass
class _Session:
    """Enhanced-mode transfer to one peer."""

    peer: str
    kind: NodeKind
    view: VersionVector
    pending: list[StateRecord] = field(default_factory=list)
    in_flight: Payload | None = None
    last_sent: bool = False
    sent: int = 0


class RelayNode(Node):
    """State machine of a node relaying opaque states between replicas."""

    kind = NodeKind.RELAY

    def __init__(self, node_id: str, protocol: ProtocolConfig | None = None) -> None:
        """Create a relay with an empty store."""
        super().__init__(node_id, protocol or ProtocolConfig())
        self.store = RelayStore()
        self._sessions: dict[str, _Session] = {}

    @property
    def vagg(self) -> VersionVector:
        """Aggregate vector of the store."""
        return self.store.vagg

    def pending_for(self, peer: str) -> tuple[StateRecord, ...]:
        """Records still planned for `peer` (empty if no session is open)."""
        session = self._sessions.get(peer)
        return tuple(session.pending) if session else ()

    def _select(self, view: VersionVector) -> list[StateRecord]:
        singles = self.protocol.selection is Selection.SINGLES
        selected = select_inflators(self.store, view, singles_first=singles)
        return sorted(selected, key=StateRecord.sort_key)

    def _greet(self, peer: str, kind: NodeKind) -> list[Outbound]:
        if kind is NodeKind.RELAY:
            return [Outbound(peer, VaggMsg(self.vagg))]
        return []

    def _abandon(self, peer: str) -> None:
        session = self._sessions.pop(peer, None)
        if session is not None:
            logger.debug(
                "%s abandons session with %s after %d states",
                self.node_id,
                peer,
                session.sent,
            )
            self._record_sync(peer, session.sent)

    def on_receive_replica_vv(
        self, src: str, peer_vv: VersionVector
    ) -> list[Outbound]:
        """Start sending the replica the states it is missing."""
        self._abandon(src)
        if self.store.holds_only(peer_vv):
            self._record_sync(src, 0)
            return []

        if not self.enhanced:
            selected = self._select(peer_vv)
            self._record_sync(src, len(selected))
            return [Outbound(src, BundleMsg(tuple(selected)))]

        session = _Session(src, NodeKind.REPLICA, peer_vv, self._select(peer_vv))
        self._sessions[src] = session
        return self._pump(session)

    def on_receive_vagg(self, src: str, peer_vagg: VersionVector) -> list[Outbound]:
        """Send a relay the stored states it is missing."""
        self._abandon(src)
        selected = self._select(peer_vagg)
        if not selected:
            self._record_sync(src, 0)
            return []

        if not self.enhanced:
            self._record_sync(src, len(selected))
            return [Outbound(src, BundleMsg(tuple(selected)))]

        session = _Session(src, NodeKind.RELAY, peer_vagg, selected)
        self._sessions[src] = session
        return self._pump(session)

    def on_receive_replica_state(
        self, src: str, record: StateRecord
    ) -> list[Outbound]:
        """Store the state a replica returned at the end of a session."""
        old_vagg = self.vagg
        if not self.enhanced:
            changed = self.store.replace(record)
        else:
            match compare(record.vv, old_vagg):
                case Ordering.AFTER | Ordering.EQUAL:
                    changed = self.store.replace(record)
                case Ordering.BEFORE:
                    logger.debug(
                        "%s discards outdated state %s from %s",
                        self.node_id,
                        record.vv,
                        src,
                    )
                    changed = False
                case Ordering.CONCURRENT:
                    changed = self.store.insert(record)
        return self._store_changed(src, record, old_vagg, changed=changed)

    def on_receive_relay_state(
        self, src: str, record: StateRecord
    ) -> list[Outbound]:
        """Insert a state received from another relay."""
        old_vagg = self.vagg
        changed = self.store.insert(record)
        return self._store_changed(src, record, old_vagg, changed=changed)

    def _store_changed(
        self, src: str, record: StateRecord, old_vagg: VersionVector, *, changed: bool
    ) -> list[Outbound]:
        session = self._sessions.get(src)
        if session is not None:
            session.view = join(session.view, record.vv)
        if not changed:
            return []

        logger.debug("%s store now %s", self.node_id, self.store)
        out: list[Outbound] = []
        if self.enhanced:
            for peer in sorted(self._sessions):
                session = self._sessions[peer]
                session.pending = self._select(session.view)
                out += self._pump(session)
            if self.vagg != old_vagg:
                out += self._inflated(source=src)
        return out

    def _pump(self, session: _Session) -> list[Outbound]:
        """Send the next pending record if nothing is in flight to the peer."""
        if session.in_flight is not None:
            return []

        if session.pending:
            record = session.pending.pop(0)
            session.view = join(session.view, record.vv)
            last = session.kind is NodeKind.REPLICA and not session.pending
            payload = StateMsg(record, last=last)
        elif session.kind is NodeKind.REPLICA and not session.last_sent:
            payload = StateMsg(None, last=True)
        else:
            self._close(session)
            return []

        session.last_sent = session.last_sent or payload.last
        session.in_flight = payload
        return [Outbound(session.peer, payload)]

    def _close(self, session: _Session) -> None:
        if self._sessions.get(session.peer) is session:
            del self._sessions[session.peer]
            self._record_sync(session.peer, session.sent)

    def on_transmit_complete(self, dst: str, payload: Payload) -> list[Outbound]:
        """Advance the session with `dst` once its in-flight record arrived."""
        session = self._sessions.get(dst)
        if session is None or session.in_flight is not payload:
            return []
        session.in_flight = None
        if isinstance(payload, StateMsg) and payload.record is not None:
            session.sent += 1
        if session.last_sent and not session.pending:
            self._close(session)
            return []
        return self._pump(session)

    def _from_replica(self, src: str, payload: Payload) -> list[Outbound]:
        match payload:
            case VectorMsg(vv=vv):
                return self.on_receive_replica_vv(src, vv)
            case StateMsg(record=StateRecord() as record):
                return self.on_receive_replica_state(src, record)
        logger.warning("%s: unexpected %s from replica %s", self.node_id, payload, src)
        return []

    def _from_relay(self, src: str, payload: Payload) -> list[Outbound]:
        match payload:
            case VaggMsg(vagg=vagg):
                return self.on_receive_vagg(src, vagg)
            case StateMsg(record=StateRecord() as record):
                return self.on_receive_relay_state(src, record)
            case BundleMsg(records=records):
                out: list[Outbound] = []
                for record in records:
                    out += self.on_receive_relay_state(src, record)
                return out
            case InflationNotice():
                return [Outbound(src, VaggMsg(self.vagg))]
        logger.warning("%s: unexpected %s from relay %s", self.node_id, payload, src)
        return []
