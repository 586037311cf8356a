"""Tests for mobility generators and contact computation."""

from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from config import MobilityConfig, Shape
from exceptions import GenerationError
from invariants import temporally_connected
from mobility import (
    AIR,
    Trajectory,
    compute_contacts,
    crossing_paths,
    gen_app_scenario,
    gen_crossing_flow,
    gen_graph_walk,
    generate,
    preset,
    range_table,
    read_street_graph,
    street_grid,
)
from tracefmt import EventKind, Role, ScenarioEvent

RANGES = range_table(15.0, 50.0)


def _still(
    node: str, x: float, *, start_ms: float = 0.0, end_ms: float | None = None
) -> Trajectory:
    traj = Trajectory(node, Role.REPLICA, start_ms=start_ms, end_ms=end_ms)
    traj.add(0.0, (x, 0.0))
    return traj


def _renders(events: list[ScenarioEvent]) -> list[str]:
    return [e.render() for e in events]


def test_static_pair_in_range() -> None:
    """Two nodes 10 m apart with a 15 m range meet at the first sample only."""
    events = compute_contacts([_still("b", 10.0), _still("a", 0.0)], RANGES, 1000, 5000)
    assert _renders(events) == ["0 ns a rep", "0 ns b rep", "0 ea a b"]


def test_air_range_applies_to_mixed_pairs() -> None:
    """A drone 40 m away is within the air range of a ground node."""
    drone = _still("d", 40.0)
    drone.node_class = AIR
    events = compute_contacts([_still("a", 0.0), drone], RANGES, 1000, 1000)
    assert "0 ea a d" in _renders(events)


def test_moving_apart_with_hysteresis() -> None:
    """Edges go down past range, or past range plus hysteresis."""
    walker = Trajectory("b", Role.RELAY)
    walker.add(0.0, (0.0, 0.0))
    walker.add(128_000.0, (128.0, 0.0))
    plain = compute_contacts([_still("a", 0.0), walker], RANGES, 1000, 30_000)
    assert "16000 ed a b" in _renders(plain)
    sticky = compute_contacts([_still("a", 0.0), walker], RANGES, 1000, 30_000, 5.0)
    assert "21000 ed a b" in _renders(sticky)


def test_departure_drops_edges_before_death() -> None:
    """A node appears at its start sample and leaves after its edges go down."""
    late = _still("b", 5.0, start_ms=1500.0, end_ms=3000.0)
    events = compute_contacts([_still("a", 0.0), late], RANGES, 1000, 5000)
    assert _renders(events) == [
        "0 ns a rep",
        "2000 ns b rep",
        "2000 ea a b",
        "3000 ed a b",
        "3000 nd b",
    ]


def test_no_churn_without_arrivals() -> None:
    """A zero entry rate generates no pedestrians."""
    cfg = MobilityConfig(entry_rate=0.0)
    paths = crossing_paths(cfg.width_m, cfg.height_m, 100.0)
    assert gen_crossing_flow(paths, cfg, np.random.default_rng(0)) == []


def test_crossing_flow_arrivals() -> None:
    """Pedestrians arrive over the run and leave at the end of their path."""
    cfg = MobilityConfig(entry_rate=0.05, duration_s=600)
    paths = crossing_paths(cfg.width_m, cfg.height_m, 100.0)
    flow = gen_crossing_flow(paths, cfg, np.random.default_rng(1))
    assert flow
    for traj in flow:
        assert 0 < traj.start_ms < 600_000
        assert traj.end_ms is not None
        assert traj.end_ms > traj.start_ms


def test_street_grid() -> None:
    """A 200 m square at 100 m spacing is a connected 3x3 grid."""
    grid = street_grid(200.0, 200.0, 100.0)
    assert grid.number_of_nodes() == 9
    assert grid.number_of_edges() == 12
    assert nx.is_connected(grid)
    assert grid.nodes["v2_1"]["pos"] == (200.0, 100.0)


def test_single_edge_walk_oscillates() -> None:
    """On a single street a walker only goes back and forth."""
    line = nx.Graph()
    line.add_node("w", pos=(0.0, 0.0))
    line.add_node("e", pos=(100.0, 0.0))
    line.add_edge("w", "e", length=100.0)
    cfg = MobilityConfig(duration_s=1000)
    [walker] = gen_graph_walk(
        line,
        ["d1"],
        Role.RELAY,
        cfg,
        np.random.default_rng(3),
        speed=(1.0, 1.0),
        pause_s=(0.0, 0.0),
    )
    assert set(walker.xs) == {0.0, 100.0}
    assert walker.times == sorted(walker.times)
    assert walker.last[0] >= 1_000_000


@pytest.mark.parametrize("graph", [nx.Graph(), nx.Graph([("a", "b"), ("c", "d")])])
def test_walk_needs_connected_graph(graph: nx.Graph) -> None:
    """Empty or disconnected street graphs are rejected."""
    with pytest.raises(GenerationError, match="connected"):
        gen_graph_walk(
            graph,
            ["r1"],
            Role.REPLICA,
            MobilityConfig(),
            np.random.default_rng(0),
            speed=(1.0, 1.0),
            pause_s=(0.0, 0.0),
        )


def test_read_street_graph(tmp_path: Path) -> None:
    """Vertices with coordinates, then edges with Euclidean lengths."""
    path = tmp_path / "streets.txt"
    path.write_text("# corner\na 0 0\nb 3 4\nedge a b\n", encoding="utf-8")
    graph = read_street_graph(path)
    assert graph.edges["a", "b"]["length"] == pytest.approx(5.0)


@pytest.mark.parametrize(
    ("text", "reason"),
    [("a 0 0\nedge a z\n", "unknown vertex"), ("a 0 north\n", "bad coordinate")],
)
def test_read_street_graph_errors(tmp_path: Path, text: str, reason: str) -> None:
    """Malformed street graphs are generation errors with a line number."""
    path = tmp_path / "streets.txt"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(GenerationError, match=reason):
        read_street_graph(path)


def test_app_scenario_period_and_window() -> None:
    """One update per replica per minute within the activity window."""
    cfg = MobilityConfig(activity_start_ms=60_000, activity_end_ms=600_000)
    updates = gen_app_scenario(["r1", "r2"], cfg, np.random.default_rng(0))
    assert len(updates) == 18
    assert all(e.kind is EventKind.UPDATE for e in updates)
    assert all(60_000 <= e.time_ms < 660_000 for e in updates)
    assert [e.time_ms for e in updates] == sorted(e.time_ms for e in updates)


def test_generation_is_seeded() -> None:
    """The same seed gives the same scenario."""
    cfg = preset(Shape.CHURN, duration_s=300, replicas=3, entry_rate=0.05, seed=7)
    first, second = generate(cfg), generate(cfg)
    assert first.contacts == second.contacts
    assert first.updates == second.updates
    other = generate(cfg.model_copy(update={"seed": 8}))
    assert other.contacts != first.contacts


def test_bridge_is_temporally_connected() -> None:
    """The replicas never meet, yet the relay links them within the run."""
    cfg = preset(Shape.BRIDGE)
    scenario = generate(cfg)
    edges = {e.nodes for e in scenario.contacts if e.kind is EventKind.EDGE_ADD}
    assert ("r01", "r02") not in edges
    assert {e.node for e in scenario.updates} == {"r01", "r02"}
    assert temporally_connected(
        scenario.contacts, 0, cfg.duration_s * 1000, ["r01", "r02"]
    )


def test_bus_and_disaster_roles() -> None:
    """Generated traces carry replica and relay roles from the generator."""
    bus = generate(preset(Shape.BUS, replicas=3, relays=2, duration_s=300))
    disaster = generate(
        preset(
            Shape.DISASTER,
            replicas=4,
            relays=1,
            duration_s=300,
            width_m=500.0,
            height_m=500.0,
        )
    )
    for scenario, relays in ((bus, {"d01", "d02"}), (disaster, {"d01"})):
        starts = [e for e in scenario.contacts if e.kind is EventKind.NODE_START]
        assert {e.node for e in starts if e.role is Role.RELAY} == relays
        assert all(e.node.startswith("r") for e in scenario.updates)
