"""Tests for the replica side of the synchronization protocols."""

import pytest

from config import Mode, Propagation, ProtocolConfig, ReplyStrategy
from rbss.crdt import Crdt, GrowOnlyCounter, ObservedRemoveMap
from rbss.messages import (
    Hello,
    InflationNotice,
    NodeKind,
    Outbound,
    StateMsg,
    StateRecord,
    VectorMsg,
)
from rbss.node import SyncKind
from rbss.replica import ReplicaNode

from .utils import connect, pump, record, vv


def _replica(
    name: str, counts: dict[str, int], protocol: ProtocolConfig | None = None
) -> ReplicaNode:
    """Replica hosting a counter whose contributions match its vector."""
    node = ReplicaNode(GrowOnlyCounter.from_counts(name, counts), protocol)
    node.vv = vv("[" + ",".join(f"{k}:{v}" for k, v in counts.items()) + "]")
    return node


def _bump(crdt: Crdt) -> None:
    assert isinstance(crdt, GrowOnlyCounter)
    crdt.increment()


def _put(crdt: Crdt) -> None:
    assert isinstance(crdt, ObservedRemoveMap)
    crdt.put("k", "v")


def test_local_update_bumps_own_entry(protocol: ProtocolConfig) -> None:
    """A local update counts in the vector and notifies every neighbor."""
    node = _replica("a", {"a": 5}, protocol)
    node.neighbors = {"b": NodeKind.REPLICA, "d1": NodeKind.RELAY}
    out = node.apply(_bump)
    assert node.vv == vv("[a:6]")
    assert out == [
        Outbound("b", InflationNotice()),
        Outbound("d1", VectorMsg(vv("[a:6]"))),
    ]


def test_local_update_without_neighbors(protocol: ProtocolConfig) -> None:
    """With no neighbors an update only bumps the vector."""
    node = ReplicaNode(ObservedRemoveMap("a"), protocol)
    assert node.is_empty
    assert node.apply(_put) == []
    assert node.vv == vv("[a:1]")
    assert not node.is_empty


def test_basic_mode_never_notifies(basic_protocol: ProtocolConfig) -> None:
    """The basic protocol does not push inflations."""
    node = _replica("a", {"a": 1}, basic_protocol)
    node.neighbors = {"b": NodeKind.REPLICA}
    assert node.apply(_bump) == []


def test_periodic_propagation_defers_notice() -> None:
    """Periodic mode marks the node dirty and notifies once on the next tick."""
    periodic = ProtocolConfig(propagation=Propagation.PERIODIC)
    node = _replica("a", {"a": 1}, periodic)
    node.neighbors = {"b": NodeKind.REPLICA}
    assert node.apply(_bump) == []
    assert node.apply(_bump) == []
    assert node.on_tick() == [Outbound("b", InflationNotice())]
    assert node.on_tick() == []


def test_greeting_sends_vector(protocol: ProtocolConfig) -> None:
    """Both to replicas and relays, the first message is the vector."""
    node = _replica("a", {"a": 5}, protocol)
    for peer, kind in (("b", NodeKind.REPLICA), ("d1", NodeKind.RELAY)):
        out = node.on_peer_detected(peer, Hello(kind))
        assert out == [Outbound(peer, VectorMsg(vv("[a:5]")))]


def test_replica_replica_conflict(protocol: ProtocolConfig) -> None:
    """Conflicting replicas both send their state and end up identical."""
    nodes = {
        "A": _replica("A", {"a": 5, "b": 2, "c": 7, "d": 3}, protocol),
        "B": _replica("B", {"a": 2, "b": 7, "c": 1, "d": 8}, protocol),
    }
    delivered = connect(nodes, "A", "B")
    states = [d for d in delivered if isinstance(d[2], StateMsg)]
    assert {(src, dst) for src, dst, _ in states} == {("A", "B"), ("B", "A")}
    assert nodes["A"].vv == nodes["B"].vv == vv("[a:5,b:7,c:7,d:8]")
    assert nodes["A"].crdt == nodes["B"].crdt


def test_replica_replica_nothing_to_send(protocol: ProtocolConfig) -> None:
    """Identical or dominated vectors trigger no state transfer."""
    node = _replica("a", {"a": 1}, protocol)
    node.neighbors["b"] = NodeKind.REPLICA
    assert node.on_receive_vv_from_replica("b", vv("[a:1]")) == []
    assert node.on_receive_vv_from_replica("b", vv("[a:1,b:4]")) == []
    out = node.on_receive_vv_from_replica("b", vv("[b:4]"))
    assert [o.payload for o in out] == [StateMsg(node.record)]
    assert [r.states for r in node.take_sync_records()] == [0, 0, 1]


def test_repeated_state_is_idempotent(protocol: ProtocolConfig) -> None:
    """Merging an already seen state changes nothing and notifies nobody."""
    node = _replica("a", {"a": 2}, protocol)
    node.neighbors["b"] = NodeKind.REPLICA
    incoming = record("[b:3]")
    assert node.merge(incoming, "b") == []
    assert node.vv == vv("[a:2,b:3]")
    assert node.merge(incoming, "b") == []
    assert node.vv == vv("[a:2,b:3]")


def test_transitive_propagation_on_a_line(protocol: ProtocolConfig) -> None:
    """A-B then B-C carries A's update to C."""
    nodes = {
        "A": _replica("A", {"A": 1}, protocol),
        "B": ReplicaNode(GrowOnlyCounter("B"), protocol),
        "C": ReplicaNode(GrowOnlyCounter("C"), protocol),
    }
    connect(nodes, "A", "B")
    connect(nodes, "B", "C")
    assert nodes["C"].vv == vv("[A:1]")
    counter = nodes["C"].crdt
    assert isinstance(counter, GrowOnlyCounter)
    assert counter.value == 1


def test_contribution_merge_and_final_reply(protocol: ProtocolConfig) -> None:
    """A merges the relay's contribution and returns its merged state."""
    node = _replica("A", {"a": 5, "b": 2, "c": 7, "d": 7}, protocol)
    node.neighbors["phi"] = NodeKind.RELAY
    out = node.on_message("phi", StateMsg(record("[c:5,d:12]"), last=True))
    assert node.vv == vv("[a:5,b:2,c:7,d:12]")
    assert [o.payload for o in out if isinstance(o.payload, StateMsg)] == [
        StateMsg(node.record)
    ]
    assert node.take_sync_records()[0].kind is SyncKind.REPLICA_RELAY


def test_empty_replica_returns_nothing(protocol: ProtocolConfig) -> None:
    """An empty replica answers an empty last contribution with silence."""
    node = ReplicaNode(GrowOnlyCounter("A"), protocol)
    node.neighbors["phi"] = NodeKind.RELAY
    assert node.on_message("phi", StateMsg(None, last=True)) == []
    assert [r.states for r in node.take_sync_records()] == [0]


def test_partial_contributions_are_kept(protocol: ProtocolConfig) -> None:
    """Contributions merged before a contact loss stay merged."""
    node = ReplicaNode(GrowOnlyCounter("A"), protocol)
    node.on_peer_detected("phi", Hello(NodeKind.RELAY))
    node.on_message("phi", StateMsg(record("[b:2]")))
    node.on_message("phi", StateMsg(record("[c:4]")))
    node.on_peer_lost("phi")
    assert node.vv == vv("[b:2,c:4]")
    assert node.take_sync_records() == []


def test_incremental_reply_strategy() -> None:
    """With incremental replies every contribution is answered."""
    incremental = ProtocolConfig(reply=ReplyStrategy.INCREMENTAL)
    node = ReplicaNode(GrowOnlyCounter("A"), incremental)
    node.neighbors["phi"] = NodeKind.RELAY
    first = node.on_message("phi", StateMsg(record("[b:2]")))
    assert StateMsg(node.record) in [o.payload for o in first]
    assert node.take_sync_records() == []
    node.on_message("phi", StateMsg(record("[c:1]"), last=True))
    assert [r.states for r in node.take_sync_records()] == [1]


def test_undecodable_state_is_discarded(protocol: ProtocolConfig) -> None:
    """A corrupted blob leaves the replica unchanged."""
    node = _replica("a", {"a": 1}, protocol)
    assert node.merge(StateRecord(b"garbage", vv("[z:9]")), "b") == []
    assert node.vv == vv("[a:1]")


def test_messages_from_strangers_are_ignored(protocol: ProtocolConfig) -> None:
    """Only neighbors are answered."""
    node = _replica("a", {"a": 1}, protocol)
    assert node.on_message("stranger", VectorMsg(vv("[]"))) == []


@pytest.mark.parametrize("kind", [NodeKind.REPLICA, NodeKind.RELAY])
def test_inflation_notice_is_answered_with_vector(
    protocol: ProtocolConfig, kind: NodeKind
) -> None:
    """A notice from any neighbor is answered with the current vector."""
    node = _replica("a", {"a": 3}, protocol)
    node.neighbors["p"] = kind
    assert node.on_message("p", InflationNotice()) == [
        Outbound("p", VectorMsg(vv("[a:3]")))
    ]


def test_merge_notifies_other_neighbors_only(protocol: ProtocolConfig) -> None:
    """An inflation from a peer is pushed to every other neighbor."""
    nodes = {
        "A": ReplicaNode(GrowOnlyCounter("A"), protocol),
        "B": ReplicaNode(GrowOnlyCounter("B"), protocol),
    }
    nodes["A"].neighbors = {"B": NodeKind.REPLICA, "C": NodeKind.REPLICA}
    out = nodes["A"].merge(record("[x:1]"), source="B")
    assert out == [Outbound("C", InflationNotice())]
    assert pump(nodes, "A", out) == []
    assert nodes["A"].protocol.mode is Mode.ENHANCED
