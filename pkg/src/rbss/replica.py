"""Replica side of the synchronization protocols.

A replica hosts one CRDT instance and the version vector of its state. With
another replica it exchanges vectors and sends its state only when it is
over the peer's vector. With a relay it sends its vector, merges the
contributions the relay picks for it, and returns its own state when the
relay flags the last contribution.
"""

import logging
from collections.abc import Callable

from config import ProtocolConfig, ReplyStrategy
from exceptions import DecodeError
from rbss.crdt import Crdt
from rbss.messages import (
    BundleMsg,
    InflationNotice,
    NodeKind,
    Outbound,
    Payload,
    StateMsg,
    StateRecord,
    VectorMsg,
)
from rbss.node import Node
from rbss.versioning import VersionVector, increment, join, over, total

logger = logging.getLogger(__name__)


class ReplicaNode(Node):
    """State machine of a node hosting a CRDT replica."""

    kind = NodeKind.REPLICA

    def __init__(self, crdt: Crdt, protocol: ProtocolConfig | None = None) -> None:
        """Wrap `crdt`; the node id is the CRDT's replica id."""
        super().__init__(crdt.replica_id, protocol or ProtocolConfig())
        self.crdt = crdt
        self.vv = VersionVector()
        self._outbox: list[Outbound] = []
        crdt.subscribe(self._on_crdt_update)

    @property
    def record(self) -> StateRecord:
        """Current serialized state and its vector."""
        return StateRecord(self.crdt.get_serialized_state(), self.vv)

    @property
    def is_empty(self) -> bool:
        """No update observed yet, locally or through merges."""
        return total(self.vv) == 0

    def apply(self, operation: Callable[[Crdt], None]) -> list[Outbound]:
        """Run a local update on the CRDT and return the resulting notifications."""
        operation(self.crdt)
        out, self._outbox = self._outbox, []
        return out

    def _on_crdt_update(self) -> None:
        self._outbox.extend(self.on_local_update())

    def on_local_update(self) -> list[Outbound]:
        """Count a local update in the vector and propagate the inflation."""
        self.vv = increment(self.vv, self.node_id)
        logger.debug("%s local update, vv %s", self.node_id, self.vv)
        return self._inflated(source=None)

    def _notification(self, peer: str, kind: NodeKind) -> Outbound:
        # a relay only answers a vector, so it gets the vector right away
        if kind is NodeKind.RELAY:
            return Outbound(peer, VectorMsg(self.vv))
        return Outbound(peer, InflationNotice())

    def _greet(self, peer: str, kind: NodeKind) -> list[Outbound]:  # noqa: ARG002
        return [Outbound(peer, VectorMsg(self.vv))]

    def _abandon(self, peer: str) -> None:
        pass

    def merge(self, record: StateRecord, source: str | None = None) -> list[Outbound]:
        """Merge a received state; returns notifications if the vector inflated.

        A state that cannot be decoded is discarded and leaves the replica
        unchanged.
        """
        try:
            self.crdt.merge_serialized_state(record.blob)
        except DecodeError as e:
            logger.warning(
                "%s discards undecodable state from %s: %s", self.node_id, source, e
            )
            return []

        merged = join(self.vv, record.vv)
        if merged == self.vv:
            return []
        self.vv = merged
        logger.debug("%s inflated to %s", self.node_id, self.vv)
        return self._inflated(source=source)

    def on_receive_vv_from_replica(
        self, src: str, peer_vv: VersionVector
    ) -> list[Outbound]:
        """Send the local state if it could inflate the peer."""
        if over(self.vv, peer_vv):
            self._record_sync(src, 1)
            return [Outbound(src, StateMsg(self.record))]
        self._record_sync(src, 0)
        return []

    def on_receive_state_from_replica(
        self, src: str, record: StateRecord
    ) -> list[Outbound]:
        """Merge a state sent by a replica."""
        return self.merge(record, source=src)

    def on_receive_contribution_from_relay(
        self, src: str, msg: StateMsg
    ) -> list[Outbound]:
        """Merge a relay contribution and return the local state when due."""
        out = self.merge(msg.record, source=src) if msg.record is not None else []
        if msg.last or self.protocol.reply is ReplyStrategy.INCREMENTAL:
            out += self._reply_to_relay(src, final=msg.last)
        return out

    def _reply_to_relay(self, src: str, *, final: bool) -> list[Outbound]:
        if self.is_empty:
            if final:
                self._record_sync(src, 0)
            return []
        if final:
            self._record_sync(src, 1)
        return [Outbound(src, StateMsg(self.record))]

    def _from_replica(self, src: str, payload: Payload) -> list[Outbound]:
        match payload:
            case VectorMsg(vv=vv):
                return self.on_receive_vv_from_replica(src, vv)
            case StateMsg(record=StateRecord() as record):
                return self.on_receive_state_from_replica(src, record)
            case InflationNotice():
                return [Outbound(src, VectorMsg(self.vv))]
        logger.warning("%s: unexpected %s from replica %s", self.node_id, payload, src)
        return []

    def _from_relay(self, src: str, payload: Payload) -> list[Outbound]:
        match payload:
            case StateMsg():
                return self.on_receive_contribution_from_relay(src, payload)
            case BundleMsg(records=records):
                out: list[Outbound] = []
                for record in records:
                    out += self.merge(record, source=src)
                return out + self._reply_to_relay(src, final=True)
            case InflationNotice():
                return [Outbound(src, VectorMsg(self.vv))]
        logger.warning("%s: unexpected %s from relay %s", self.node_id, payload, src)
        return []
