"""Behavior shared by replica and relay nodes.

Handlers are called by the simulator one at a time and never block. Every
handler returns the messages the node wants transmitted; nothing is sent
behind the caller's back.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum

from config import Mode, Propagation, ProtocolConfig
from rbss.messages import Hello, InflationNotice, NodeKind, Outbound, Payload, describe

logger = logging.getLogger(__name__)


class SyncKind(str, Enum):
    """Pair of roles taking part in a synchronization."""

    REPLICA_REPLICA = "replica-replica"
    REPLICA_RELAY = "replica-relay"
    RELAY_RELAY = "relay-relay"


@dataclass(frozen=True, slots=True)
class SyncRecord:
    """One side of a finished (or interrupted) synchronization."""

    peer: str
    kind: SyncKind
    states: int


def sync_kind(a: NodeKind, b: NodeKind) -> SyncKind:
    """Classify a synchronization by the roles of both ends."""
    if a is b:
        if a is NodeKind.REPLICA:
            return SyncKind.REPLICA_REPLICA
        return SyncKind.RELAY_RELAY
    return SyncKind.REPLICA_RELAY


class Node(ABC):
    """Protocol participant with a neighborhood and an outbox of sync records."""

    kind: NodeKind

    def __init__(self, node_id: str, protocol: ProtocolConfig) -> None:
        """Create a node with no neighbors."""
        if not node_id:
            msg = "A node needs a non-empty id"
            raise ValueError(msg)
        self.node_id = node_id
        self.protocol = protocol
        self.neighbors: dict[str, NodeKind] = {}
        self.sync_records: list[SyncRecord] = []
        self._dirty = False

    @property
    def enhanced(self) -> bool:
        """True when running the enhanced protocol."""
        return self.protocol.mode is Mode.ENHANCED

    def take_sync_records(self) -> list[SyncRecord]:
        """Return and clear the synchronizations recorded since the last call."""
        records, self.sync_records = self.sync_records, []
        return records

    def _record_sync(self, peer: str, states: int) -> None:
        kind = sync_kind(self.kind, self.neighbors.get(peer, self.kind))
        self.sync_records.append(SyncRecord(peer, kind, states))

    def on_peer_detected(self, peer: str, hello: Hello) -> list[Outbound]:
        """Register a new neighbor and open the synchronization with it."""
        logger.debug("%s detected %s %s", self.node_id, hello.kind.value, peer)
        self.neighbors[peer] = hello.kind
        return self._greet(peer, hello.kind)

    def on_peer_lost(self, peer: str) -> list[Outbound]:
        """Forget a neighbor and abandon any synchronization in progress with it."""
        logger.debug("%s lost contact with %s", self.node_id, peer)
        self._abandon(peer)
        self.neighbors.pop(peer, None)
        return []

    def on_message(self, src: str, payload: Payload) -> list[Outbound]:
        """Dispatch a delivered message according to the sender's role."""
        kind = self.neighbors.get(src)
        if kind is None:
            logger.warning(
                "%s ignores %s from non-neighbor %s",
                self.node_id,
                describe(payload),
                src,
            )
            return []
        logger.debug("%s <- %s: %s", self.node_id, src, describe(payload))
        if kind is NodeKind.REPLICA:
            return self._from_replica(src, payload)
        return self._from_relay(src, payload)

    def on_transmit_complete(
        self,
        dst: str,  # noqa: ARG002
        payload: Payload,  # noqa: ARG002
    ) -> list[Outbound]:
        """Called once a message sent by this node reached `dst`."""
        return []

    def on_tick(self) -> list[Outbound]:
        """Periodic propagation: notify neighbors once if an inflation is pending."""
        if not self._dirty:
            return []
        self._dirty = False
        return self._notify(exclude=None)

    def _inflated(self, source: str | None) -> list[Outbound]:
        """React to growth of the local state or vector."""
        if not self.enhanced:
            return []
        if self.protocol.propagation is Propagation.PERIODIC:
            self._dirty = True
            return []
        return self._notify(exclude=source)

    def _notify(self, exclude: str | None) -> list[Outbound]:
        return [
            self._notification(peer, kind)
            for peer, kind in sorted(self.neighbors.items())
            if peer != exclude
        ]

    def _notification(self, peer: str, kind: NodeKind) -> Outbound:  # noqa: ARG002
        return Outbound(peer, InflationNotice())

    @abstractmethod
    def _greet(self, peer: str, kind: NodeKind) -> list[Outbound]: ...

    @abstractmethod
    def _abandon(self, peer: str) -> None: ...

    @abstractmethod
    def _from_replica(self, src: str, payload: Payload) -> list[Outbound]: ...

    @abstractmethod
    def _from_relay(self, src: str, payload: Payload) -> list[Outbound]: ...
