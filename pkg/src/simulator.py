"""Deterministic discrete-event simulator over time-varying contact graphs.

The simulator plays a contact trace and an application scenario together.
Nodes are replicas, relays, or role-less nodes that only move around. Time
is kept in integer milliseconds. Messages travel over an edge with a delay
given by the latency model and are delivered only if that edge stayed up
from send to delivery; on a directed pair they arrive in send order.

Everything observable is appended to an event log of plain dicts (written
as JSON lines), which the metrics and invariant checks consume:

    header  mode, propagation, selection, payload, seed, latency
    node    t, node, role, up
    edge    t, a, b, up
    update  t, node
    global  t, vv
    vv      t, node, vv
    store   t, node, size, vagg, records
    sync    t, src, dst, kind, states
    drop    t, src, dst, what
    end     t, replicas, relays, updates
"""

import heapq
import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from config import (
    CONVERGENCE_FILE,
    EVENT_LOG_FILE,
    Mode,
    Payload,
    Propagation,
    SimConfig,
)
from exceptions import ScenarioError
from invariants import assert_replica, assert_store
from metrics import ConvergenceLog
from rbss.crdt import Crdt, GrowOnlyCounter, ObservedRemoveMap
from rbss.messages import Hello, Outbound, payload_size
from rbss.messages import Payload as Message
from rbss.node import Node
from rbss.relay import RelayNode
from rbss.replica import ReplicaNode
from rbss.versioning import VersionVector, increment
from tracefmt import EventKind, Role, ScenarioEvent, merge_scenarios
from utils import seconds, write_json, write_jsonl

logger = logging.getLogger(__name__)

EventRecord = dict[str, Any]

_MAP_KEYS = 8
_DELETE_PROBABILITY = 0.2

# queue entry kinds; entries are ordered by (time, seq)
_SCENARIO = 0
_DELIVERY = 1
_TICK = 2


def assign_role(ratio: float, arrival_index: int) -> Role:
    """Role of the `arrival_index`-th (0-based) arriving non-replica node.

    Relays are spread evenly over arrivals: with ratio p/q, arrival i is a
    relay iff ceil((i+1)p/q) > ceil(ip/q), so the first n arrivals hold
    exactly ceil(np/q) relays. A ratio of 1/3 gives relay, none, none, relay,
    none, none. The ratio is honored as given rather than rounded to every
    k-th node: 0.33 is 33/100 and yields 33 relays per 100 arrivals, where
    1/3 yields 34.
    """
    if not 0.0 <= ratio <= 1.0:
        msg = f"Relay ratio {ratio} is outside [0, 1]"
        raise ValueError(msg)
    frac = Fraction(ratio).limit_denominator(1000)
    p, q = frac.numerator, frac.denominator

    def ceil(n: int) -> int:
        return -(-n * p // q)

    return Role.RELAY if ceil(arrival_index + 1) > ceil(arrival_index) else Role.NONE


@dataclass(frozen=True)
class RoleAssignment:
    """How nodes get their role.

    Without a ratio the trace's roles stand, optionally overridden per node by
    `table`. With a ratio, every arriving node the trace does not mark as a
    replica gets its role from `assign_role` in arrival order.
    """

    ratio: float | None = None
    table: Mapping[str, Role] = field(default_factory=dict)

    def assign(self, node: str, trace_role: Role, arrival_index: int) -> Role:
        """Role for a starting node; `arrival_index` counts non-replica arrivals."""
        if node in self.table:
            return self.table[node]
        if self.ratio is None or trace_role is Role.REPLICA:
            return trace_role
        return assign_role(self.ratio, arrival_index)


@dataclass
class SimulationResult:
    """Event log and final node states of one run."""

    events: list[EventRecord]
    end_ms: int
    global_vv: VersionVector
    replicas: dict[str, ReplicaNode]
    relays: dict[str, RelayNode]

    @property
    def distances(self) -> dict[str, int]:
        """Final convergence distance of every replica still alive."""
        total = sum(count for _, count in self.global_vv.items())
        return {
            rid: total - sum(c for _, c in node.vv.items())
            for rid, node in sorted(self.replicas.items())
        }

    @property
    def converged(self) -> bool:
        """True iff every live replica reached the global vector."""
        return all(node.vv == self.global_vv for node in self.replicas.values())


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def make_crdt(payload: Payload, replica_id: str) -> Crdt:
    """Reference CRDT hosted by a simulated replica."""
    if payload is Payload.GCOUNTER:
        return GrowOnlyCounter(replica_id)
    return ObservedRemoveMap(replica_id)


class Simulator:
    """Single-threaded event loop over replica and relay state machines."""

    def __init__(
        self, config: SimConfig | None = None, roles: RoleAssignment | None = None
    ) -> None:
        """Prepare a run; `roles` defaults to the config's relay ratio."""
        self.config = config or SimConfig()
        self.roles = roles or RoleAssignment(ratio=self.config.relay_ratio)
        self._rng = np.random.default_rng(self.config.seed)
        self._queue: list[tuple[int, int, int, Any]] = []
        self._seq = 0
        self._now = 0
        self._events: list[EventRecord] = []

        self._nodes: dict[str, Node] = {}
        self._roles: dict[str, Role] = {}
        self._dead: set[str] = set()
        self._arrivals = 0
        self._replicas_seen: set[str] = set()
        self._relays_seen: set[str] = set()
        self._edges: dict[tuple[str, str], int] = {}
        self._epoch = 0
        self._fifo: dict[tuple[str, str], int] = {}
        self._global = VersionVector()
        self._updates = 0
        self._last_vv: dict[str, VersionVector] = {}
        self._last_store: dict[str, tuple[str, ...]] = {}

    def _log(self, record_type: str, /, **fields: Any) -> None:  # noqa: ANN401
        self._events.append({"type": record_type, "t": self._now, **fields})

    def _snapshot(self, node_ids: Iterable[str]) -> None:
        """Log vector, store and sync changes of the nodes a handler touched."""
        for node_id in sorted(set(node_ids)):
            node = self._nodes.get(node_id)
            if node is None:
                continue
            for sync in node.take_sync_records():
                self._log(
                    "sync",
                    src=node_id,
                    dst=sync.peer,
                    kind=sync.kind.value,
                    states=sync.states,
                )
            if isinstance(node, ReplicaNode):
                if node.vv != self._last_vv.get(node_id):
                    self._last_vv[node_id] = node.vv
                    self._log("vv", node=node_id, vv=node.vv.render())
                if self.config.check_invariants:
                    assert_replica(node_id, node.vv, self._global)
            elif isinstance(node, RelayNode):
                records = tuple(r.vv.render() for r in node.store)
                if records != self._last_store.get(node_id):
                    self._last_store[node_id] = records
                    self._log(
                        "store",
                        node=node_id,
                        size=len(records),
                        vagg=node.vagg.render(),
                        records=list(records),
                    )
                if self.config.check_invariants:
                    assert_store(node_id, node.store, len(self._replicas_seen))

    def _push(self, time_ms: int, kind: int, item: Any) -> None:  # noqa: ANN401
        heapq.heappush(self._queue, (time_ms, self._seq, kind, item))
        self._seq += 1

    def _send(self, src: str, outbound: Sequence[Outbound]) -> None:
        for out in outbound:
            epoch = self._edges.get(_pair(src, out.dst))
            if epoch is None:
                self._log("drop", src=src, dst=out.dst, what=type(out.payload).__name__)
                continue
            delay = self.config.latency.delay(payload_size(out.payload))
            deliver_at = max(self._now + delay, self._fifo.get((src, out.dst), 0))
            self._fifo[(src, out.dst)] = deliver_at
            self._push(deliver_at, _DELIVERY, (src, out.dst, out.payload, epoch))

    def _require_live(self, node_id: str, event: ScenarioEvent) -> None:
        if node_id not in self._roles:
            state = "dead" if node_id in self._dead else "unknown"
            msg = f"At {event.time_ms} ms: {event.render()!r} names {state} {node_id}"
            raise ScenarioError(msg)

    def _node_start(self, event: ScenarioEvent) -> None:
        node_id = event.node
        if node_id in self._roles or node_id in self._dead:
            msg = f"At {event.time_ms} ms: node {node_id} started twice"
            raise ScenarioError(msg)
        trace_role = event.role or Role.NONE
        role = self.roles.assign(node_id, trace_role, self._arrivals)
        if trace_role is not Role.REPLICA:
            self._arrivals += 1

        self._roles[node_id] = role
        protocol = self.config.protocol
        if role is Role.REPLICA:
            self._nodes[node_id] = ReplicaNode(
                make_crdt(self.config.payload, node_id), protocol
            )
            self._replicas_seen.add(node_id)
        elif role is Role.RELAY:
            self._nodes[node_id] = RelayNode(node_id, protocol)
            self._relays_seen.add(node_id)
        self._log("node", node=node_id, role=role.value, up=True)

    def _node_death(self, event: ScenarioEvent) -> None:
        node_id = event.node
        self._require_live(node_id, event)
        for pair in sorted(p for p in self._edges if node_id in p):
            self._edge_down(pair)
        self._nodes.pop(node_id, None)
        del self._roles[node_id]
        self._dead.add(node_id)
        self._log("node", node=node_id, role="dead", up=False)

    def _edge_add(self, event: ScenarioEvent) -> None:
        a, b = _pair(event.nodes[0], event.nodes[1])
        self._require_live(a, event)
        self._require_live(b, event)
        if (a, b) in self._edges:
            logger.warning("Edge %s-%s already up at %d ms, ignored", a, b, self._now)
            return

        self._epoch += 1
        self._edges[(a, b)] = self._epoch
        self._log("edge", a=a, b=b, up=True)
        node_a, node_b = self._nodes.get(a), self._nodes.get(b)
        if node_a is None or node_b is None:
            return
        self._send(a, node_a.on_peer_detected(b, Hello(node_b.kind)))
        self._send(b, node_b.on_peer_detected(a, Hello(node_a.kind)))
        self._snapshot((a, b))

    def _edge_down(self, pair: tuple[str, str]) -> None:
        del self._edges[pair]
        a, b = pair
        self._log("edge", a=a, b=b, up=False)
        for node_id, peer in ((a, b), (b, a)):
            node = self._nodes.get(node_id)
            if node is not None and self._nodes.get(peer) is not None:
                self._send(node_id, node.on_peer_lost(peer))
        self._snapshot(pair)

    def _edge_del(self, event: ScenarioEvent) -> None:
        pair = _pair(event.nodes[0], event.nodes[1])
        if pair not in self._edges:
            logger.warning("Edge %s-%s is not up at %d ms, ignored", *pair, self._now)
            return
        self._edge_down(pair)

    def _update(self, event: ScenarioEvent) -> None:
        node_id = event.node
        self._require_live(node_id, event)
        node = self._nodes.get(node_id)
        if not isinstance(node, ReplicaNode):
            msg = f"At {event.time_ms} ms: update on non-replica node {node_id}"
            raise ScenarioError(msg)

        self._updates += 1
        self._global = increment(self._global, node_id)
        self._log("update", node=node_id)
        self._log("global", vv=self._global.render())
        self._send(node_id, node.apply(self._operation(node_id)))
        self._snapshot((node_id,))

    def _operation(self, node_id: str) -> Callable[[Crdt], None]:
        """Draw the next local update of the reference workload."""
        key = f"k{int(self._rng.integers(_MAP_KEYS))}"
        delete = float(self._rng.random()) < _DELETE_PROBABILITY
        value = f"{node_id}.{self._updates}"

        def operation(crdt: Crdt) -> None:
            if isinstance(crdt, GrowOnlyCounter):
                crdt.increment()
            elif isinstance(crdt, ObservedRemoveMap):
                if delete and crdt.get(key) is not None:
                    crdt.delete(key)
                else:
                    crdt.put(key, value)

        return operation

    def _scenario(self, event: ScenarioEvent) -> None:
        match event.kind:
            case EventKind.NODE_START:
                self._node_start(event)
            case EventKind.NODE_DEATH:
                self._node_death(event)
            case EventKind.EDGE_ADD:
                self._edge_add(event)
            case EventKind.EDGE_DEL:
                self._edge_del(event)
            case EventKind.UPDATE:
                self._update(event)

    def _deliver(self, src: str, dst: str, payload: Message, epoch: int) -> None:
        if self._edges.get(_pair(src, dst)) != epoch:
            logger.debug("Dropped %s from %s to %s: contact lost", payload, src, dst)
            self._log("drop", src=src, dst=dst, what=type(payload).__name__)
            return

        receiver, sender = self._nodes.get(dst), self._nodes.get(src)
        if receiver is None or sender is None:
            return
        self._send(dst, receiver.on_message(src, payload))
        self._send(src, sender.on_transmit_complete(dst, payload))
        self._snapshot((src, dst))

    def _tick(self) -> None:
        for node_id in sorted(self._nodes):
            self._send(node_id, self._nodes[node_id].on_tick())
        self._snapshot(self._nodes)

    def run(
        self, contacts: Sequence[ScenarioEvent], updates: Sequence[ScenarioEvent] = ()
    ) -> SimulationResult:
        """Play both scenarios to the end of the cool-down and return the log.

        Raises:
            ScenarioError: If an event refers to a dead or unknown node, or an
                update targets a node that is not a replica

        """
        events = merge_scenarios(contacts, updates)
        last_ms = events[-1].time_ms if events else 0
        end_ms = last_ms + self.config.cooldown_ms
        protocol = self.config.protocol

        self._log(
            "header",
            mode=protocol.mode.value,
            propagation=protocol.propagation.value,
            selection=protocol.selection.value,
            reply=protocol.reply.value,
            payload=self.config.payload.value,
            seed=self.config.seed,
            latency_base_ms=self.config.latency.base_ms,
            latency_size_factor=self.config.latency.size_factor,
        )
        for event in events:
            self._push(event.time_ms, _SCENARIO, event)
        periodic = protocol.propagation is Propagation.PERIODIC
        if protocol.mode is Mode.ENHANCED and periodic:
            self._push(protocol.period_ms, _TICK, None)

        logger.info(
            "Simulating %d scenario events until %s", len(events), seconds(end_ms)
        )
        while self._queue and self._queue[0][0] <= end_ms:
            self._now, _, kind, item = heapq.heappop(self._queue)
            if kind == _SCENARIO:
                self._scenario(item)
            elif kind == _DELIVERY:
                self._deliver(*item)
            else:
                self._tick()
                self._push(self._now + protocol.period_ms, _TICK, None)

        self._now = end_ms
        replicas = {k: v for k, v in self._nodes.items() if isinstance(v, ReplicaNode)}
        relays = {k: v for k, v in self._nodes.items() if isinstance(v, RelayNode)}
        self._log(
            "end",
            replicas=sorted(self._replicas_seen),
            relays=sorted(self._relays_seen),
            updates=self._updates,
        )
        logger.info(
            "Simulation done: %d updates, %d log records",
            self._updates,
            len(self._events),
        )
        return SimulationResult(self._events, end_ms, self._global, replicas, relays)


def simulate(
    contacts: Sequence[ScenarioEvent],
    updates: Sequence[ScenarioEvent] = (),
    config: SimConfig | None = None,
    roles: RoleAssignment | None = None,
) -> SimulationResult:
    """Run one simulation with a fresh simulator."""
    return Simulator(config, roles).run(contacts, updates)


def write_run(result: SimulationResult, out_dir: Path) -> list[Path]:
    """Write the event log and the convergence timelines of a run."""
    events_path = out_dir / EVENT_LOG_FILE
    write_jsonl(events_path, result.events)
    convergence_path = out_dir / CONVERGENCE_FILE
    write_json(convergence_path, ConvergenceLog.from_events(result.events).to_json())
    logger.info("Wrote %d log records to %s", len(result.events), out_dir)
    return [events_path, convergence_path]
