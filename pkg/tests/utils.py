"""Utility functions for relay-based synchronization tests."""

import logging
import random
from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from statistics import median
from typing import Any

from metrics import ConvergenceLog, replica_latencies
from rbss.crdt import GrowOnlyCounter
from rbss.messages import Hello, Outbound, StateRecord
from rbss.node import Node
from rbss.relay import RelayStore
from rbss.versioning import VersionVector
from tracefmt import Role, ScenarioEvent

logger = logging.getLogger(__name__)


def vv(text: str) -> VersionVector:
    """Version vector from its rendering, e.g. `[a:3,b:2]`."""
    return VersionVector.parse(text)


def record(text: str) -> StateRecord:
    """State record whose blob is a grow-only counter with the vector's counts.

    The blob decodes, so records built this way can be merged by replicas.
    """
    vector = vv(text)
    counter = GrowOnlyCounter.from_counts("fixture", vector.as_dict())
    return StateRecord(counter.get_serialized_state(), vector)


def store(*texts: str) -> RelayStore:
    """Relay store holding one record per rendered vector."""
    return RelayStore(record(t) for t in texts)


def rendered(records: Iterable[StateRecord]) -> list[str]:
    """Renderings of the vectors of `records`, in iteration order."""
    return [r.vv.render() for r in records]


def pump(
    nodes: Mapping[str, Node], src: str, outbound: Sequence[Outbound]
) -> list[tuple[str, str, object]]:
    """Deliver messages synchronously until no node has anything left to send.

    Every delivery calls the receiver's `on_message`, then the sender's
    `on_transmit_complete`, like the simulator does. Messages to nodes not in
    `nodes` are dropped. Returns the delivered (src, dst, payload) triples.
    """
    queue = deque((src, out) for out in outbound)
    delivered = []
    while queue:
        sender, out = queue.popleft()
        if out.dst not in nodes:
            continue
        delivered.append((sender, out.dst, out.payload))
        replies = nodes[out.dst].on_message(sender, out.payload)
        queue.extend((out.dst, reply) for reply in replies)
        follow = nodes[sender].on_transmit_complete(out.dst, out.payload)
        queue.extend((sender, more) for more in follow)
    return delivered


def connect(nodes: Mapping[str, Node], a: str, b: str) -> list[tuple[str, str, object]]:
    """Bring up the link between `a` and `b` and run both sides to quiescence."""
    first = nodes[a].on_peer_detected(b, Hello(nodes[b].kind))
    second = nodes[b].on_peer_detected(a, Hello(nodes[a].kind))
    return pump(nodes, a, first) + pump(nodes, b, second)


def disconnect(nodes: Mapping[str, Node], a: str, b: str) -> None:
    """Take the link between `a` and `b` down on both sides."""
    nodes[a].on_peer_lost(b)
    nodes[b].on_peer_lost(a)


def random_scenario(  # noqa: PLR0913
    rng: random.Random,
    replicas: int = 3,
    relays: int = 2,
    steps: int = 60,
    step_ms: int = 1000,
    contact_ms: tuple[int, int] | None = None,
) -> tuple[list[ScenarioEvent], list[ScenarioEvent]]:
    """Random contact trace and updates over a small fixed population.

    Without `contact_ms`, each step flips a random edge up or down. With it,
    each step opens a contact between a random pair that is not connected
    and closes it after a uniform duration in `contact_ms`, so short contacts
    break sessions while messages are in flight. No node ever dies. Returns
    (contacts, updates).
    """
    names = [f"r{i}" for i in range(replicas)] + [f"d{i}" for i in range(relays)]
    starts = [
        ScenarioEvent.node_start(0, n, Role.REPLICA if n[0] == "r" else Role.RELAY)
        for n in names
    ]
    edges: list[ScenarioEvent] = []
    updates = []
    up: set[tuple[str, str]] = set()
    down_at: dict[tuple[str, str], int] = {}
    for step in range(1, steps + 1):
        t = step * step_ms
        a, b = sorted(rng.sample(names, 2))
        if contact_ms is None:
            edges.append(ScenarioEvent.edge(t, a, b, up=(a, b) not in up))
            up ^= {(a, b)}
        elif down_at.get((a, b), -1) < t:
            down_at[(a, b)] = t + rng.randint(*contact_ms)
            edges.append(ScenarioEvent.edge(t, a, b, up=True))
            edges.append(ScenarioEvent.edge(down_at[(a, b)], a, b, up=False))
        if rng.random() < 0.5:  # noqa: PLR2004
            updates.append(ScenarioEvent.update(t, rng.choice(names[:replicas])))
    edges.sort(key=lambda e: e.time_ms)
    return starts + edges, updates


def median_latency(events: Iterable[dict[str, Any]]) -> float:
    """Median catch-up delay over every replica and update time of a run.

    A replica that never catches up counts with the time left until the end
    of the run, so runs that leave updates behind do not look faster.
    """
    log = ConvergenceLog.from_events(events)
    samples = [
        log.end_ms - t if value is None else value
        for replica in log.replica_timelines
        for t, value in replica_latencies(log, replica).items()
    ]
    return median(samples) if samples else 0.0
