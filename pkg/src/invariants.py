"""Invariant checks over relay stores, replica vectors and recorded event logs."""

import itertools
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any

import networkx as nx

from exceptions import InvariantViolation
from rbss.relay import RelayStore
from rbss.versioning import VersionVector, concurrent, join_all, over, total
from tracefmt import EventKind, ScenarioEvent

logger = logging.getLogger(__name__)

STORE_CONCURRENCY = "store-concurrency"
STORE_SIZE = "store-size"
STORE_VAGG = "store-vagg"
VAGG_MONOTONIC = "vagg-monotonic"
REPLICA_MONOTONIC = "replica-monotonic"
GLOBAL_MONOTONIC = "global-monotonic"
CAUSAL_SAFETY = "causal-safety"
CONSERVATION = "conservation"
REPLICA_TRANSFER = "replica-transfer"


@dataclass(frozen=True, slots=True)
class Violation:
    """A broken invariant, located in the log when replaying one."""

    invariant: str
    node: str
    detail: str
    t: int = 0

    def __str__(self) -> str:
        return f"t={self.t} {self.node}: {self.invariant}: {self.detail}"


def check_vectors(
    node: str, vectors: Sequence[VersionVector], vagg: VersionVector, n_replicas: int
) -> list[Violation]:
    """Check the store invariants on the vectors of a store's records."""
    violations = []
    for a, b in itertools.combinations(vectors, 2):
        if not concurrent(a, b):
            detail = f"{a} and {b} are not concurrent"
            violations.append(Violation(STORE_CONCURRENCY, node, detail))
    if len(vectors) > n_replicas:
        detail = f"{len(vectors)} records for {n_replicas} replicas"
        violations.append(Violation(STORE_SIZE, node, detail))
    joined = join_all(vectors)
    if joined != vagg:
        detail = f"vagg {vagg} but records join to {joined}"
        violations.append(Violation(STORE_VAGG, node, detail))
    return violations


def check_store(node: str, store: RelayStore, n_replicas: int) -> list[Violation]:
    """Pairwise concurrency, size bound and aggregate vector of a live store."""
    return check_vectors(node, [r.vv for r in store], store.vagg, n_replicas)


def assert_store(node: str, store: RelayStore, n_replicas: int) -> None:
    """Raise on the first store invariant violation.

    Raises:
        InvariantViolation: If the store breaks an invariant

    """
    violations = check_store(node, store, n_replicas)
    if violations:
        first = violations[0]
        raise InvariantViolation(first.invariant, f"{node}: {first.detail}")


def assert_replica(node: str, vv: VersionVector, global_vv: VersionVector) -> None:
    """Raise if a replica's vector is ahead of the global vector anywhere.

    Raises:
        InvariantViolation: If `vv` is over `global_vv`

    """
    if over(vv, global_vv):
        detail = f"{node} at {vv} is ahead of global {global_vv}"
        raise InvariantViolation(CAUSAL_SAFETY, detail)


def replay_log(events: Iterable[dict[str, Any]]) -> list[Violation]:  # noqa: C901
    """Check every invariant along a recorded event log.

    Store snapshots are checked for concurrency, size and vagg; replica and
    global vectors for monotonicity and causal safety; the end of the log for
    conservation of updates. Relay vaggs must not regress in enhanced mode.
    """
    violations: list[Violation] = []
    global_vv = VersionVector()
    replicas: set[str] = set()
    last_vv: dict[str, VersionVector] = {}
    last_vagg: dict[str, VersionVector] = {}
    enhanced = True
    updates = 0

    def add(invariant: str, node: str, detail: str, t: int) -> None:
        violations.append(Violation(invariant, node, detail, t))

    for event in events:
        t = int(event.get("t", 0))
        match event.get("type"):
            case "header":
                enhanced = event.get("mode", "enhanced") == "enhanced"
            case "node" if event.get("role") == "rep":
                replicas.add(event["node"])
            case "update":
                updates += 1
            case "global":
                vv = VersionVector.parse(event["vv"])
                if over(global_vv, vv):
                    add(GLOBAL_MONOTONIC, "global", f"{global_vv} -> {vv}", t)
                global_vv = vv
            case "vv":
                node, vv = event["node"], VersionVector.parse(event["vv"])
                previous = last_vv.get(node, VersionVector())
                if over(previous, vv):
                    add(REPLICA_MONOTONIC, node, f"{previous} -> {vv}", t)
                if over(vv, global_vv):
                    add(CAUSAL_SAFETY, node, f"{vv} ahead of global {global_vv}", t)
                last_vv[node] = vv
            case "store":
                node = event["node"]
                vectors = [VersionVector.parse(r) for r in event["records"]]
                vagg = VersionVector.parse(event["vagg"])
                if len(vectors) != event.get("size", len(vectors)):
                    add(STORE_SIZE, node, "size field does not match records", t)
                for v in check_vectors(node, vectors, vagg, len(replicas)):
                    add(v.invariant, v.node, v.detail, t)
                previous = last_vagg.get(node, VersionVector())
                if enhanced and over(previous, vagg):
                    add(VAGG_MONOTONIC, node, f"{previous} -> {vagg}", t)
                last_vagg[node] = vagg
            case "sync" if event["src"] in replicas and event["states"] > 1:
                add(REPLICA_TRANSFER, event["src"], f"sent {event['states']} states", t)
            case "end":
                if total(global_vv) != updates:
                    detail = f"{updates} updates but global total {total(global_vv)}"
                    add(CONSERVATION, "global", detail, t)

    logger.info("Replayed log: %d violations", len(violations))
    return violations


def reachable_sets(
    contacts: Sequence[ScenarioEvent],
    start_ms: int,
    end_ms: int,
    carriers: Iterable[str] | None = None,
) -> dict[str, set[str]]:
    """For every carrier, the carriers it can reach by a time-respecting journey.

    A journey starts at `start_ms` or later, hops along edges that are up at
    the time of the hop, may wait at any carrier, and must arrive by
    `end_ms`. Only `carriers` (all nodes if None) store and forward data.
    Hops take no time, so this is an upper bound on what a protocol achieves.
    """
    allowed = set(carriers) if carriers is not None else None
    graph: nx.Graph = nx.Graph()
    reached: dict[str, set[str]] = {}

    def usable(node: str) -> bool:
        return allowed is None or node in allowed

    def spread() -> None:
        for component in nx.connected_components(graph):
            sources = [s for s, seen in reached.items() if seen & component]
            for source in sources:
                reached[source] |= component

    for time_ms, group in itertools.groupby(contacts, key=lambda e: e.time_ms):
        if time_ms > end_ms:
            break
        batch = list(group)
        for event in batch:
            if event.kind is EventKind.NODE_START and usable(event.node):
                graph.add_node(event.node)
                reached.setdefault(event.node, {event.node})
            elif event.kind is EventKind.EDGE_ADD and all(map(usable, event.nodes)):
                graph.add_edge(*event.nodes)
        if time_ms >= start_ms:
            spread()
        for event in batch:
            if event.kind is EventKind.EDGE_DEL and graph.has_edge(*event.nodes):
                graph.remove_edge(*event.nodes)
            elif event.kind is EventKind.NODE_DEATH and graph.has_node(event.node):
                graph.remove_node(event.node)
    if not contacts or contacts[-1].time_ms < start_ms:
        spread()
    return reached


def temporally_connected(
    contacts: Sequence[ScenarioEvent],
    start_ms: int,
    end_ms: int,
    nodes: Iterable[str],
    carriers: Iterable[str] | None = None,
) -> bool:
    """True iff every node in `nodes` can reach every other one in the window."""
    targets = set(nodes)
    reached = reachable_sets(contacts, start_ms, end_ms, carriers)
    return all(targets <= reached.get(node, {node}) for node in targets)
