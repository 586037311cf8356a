"""Synthetic mobility and the contact traces derived from it.

Generators produce trajectories: piecewise linear movement sampled at
waypoint times, with an optional arrival and departure time. Contacts are
computed by sampling all trajectories on a common clock and comparing
pairwise distances with the transmission range of each node-class pair.

Street graphs are networkx graphs whose vertices carry a `pos` attribute
and whose edges carry their Euclidean `length`.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from config import DEFAULT_STREET_SPACING_M, MobilityConfig, Shape, SpeedRange
from exceptions import GenerationError
from tracefmt import Role, ScenarioEvent

logger = logging.getLogger(__name__)

GROUND = "ground"
AIR = "air"

Point = tuple[float, float]
RangeTable = dict[tuple[str, str], float]

_WAYPOINT_TRIES = 64


@dataclass
class Trajectory:
    """Movement of one node; times in ms, positions in m."""

    node: str
    role: Role
    node_class: str = GROUND
    times: list[float] = field(default_factory=list)
    xs: list[float] = field(default_factory=list)
    ys: list[float] = field(default_factory=list)
    start_ms: float = 0.0
    end_ms: float | None = None

    def add(self, time_ms: float, point: Point) -> None:
        """Append a waypoint reached at `time_ms`."""
        self.times.append(time_ms)
        self.xs.append(point[0])
        self.ys.append(point[1])

    @property
    def last(self) -> tuple[float, Point]:
        """Time and position of the last waypoint."""
        return self.times[-1], (self.xs[-1], self.ys[-1])

    def positions(self, times_ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated positions at the given times."""
        return (
            np.interp(times_ms, self.times, self.xs),
            np.interp(times_ms, self.times, self.ys),
        )


@dataclass
class Scenario:
    """Generated contact trace and application scenario."""

    contacts: list[ScenarioEvent]
    updates: list[ScenarioEvent]


def _uniform(rng: np.random.Generator, bounds: SpeedRange) -> float:
    low, high = bounds
    return float(rng.uniform(low, high)) if high > low else float(low)


def _distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _ids(prefix: str, count: int) -> list[str]:
    width = max(2, len(str(count)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(count)]


def _waypoint(
    rng: np.random.Generator, here: Point, flight_m: float, width: float, height: float
) -> Point:
    """Uniform point of the area within `flight_m` of `here`."""
    x_lo, x_hi = max(0.0, here[0] - flight_m), min(width, here[0] + flight_m)
    y_lo, y_hi = max(0.0, here[1] - flight_m), min(height, here[1] + flight_m)
    for _ in range(_WAYPOINT_TRIES):
        point = (float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)))
        if _distance(here, point) <= flight_m:
            return point
    return here


def gen_random_waypoint(  # noqa: PLR0913
    nodes: Sequence[str],
    role: Role,
    cfg: MobilityConfig,
    rng: np.random.Generator,
    *,
    speed: SpeedRange,
    pause_s: SpeedRange,
    flight_m: float,
    node_class: str = GROUND,
) -> list[Trajectory]:
    """Random waypoint movement over the whole configured duration.

    Each node starts at a uniform point, then repeatedly picks a uniform
    waypoint at most `flight_m` away, moves there at a uniform speed and
    pauses for a uniform time.
    """
    duration_ms = cfg.duration_s * 1000
    trajectories = []
    for node in nodes:
        traj = Trajectory(node, role, node_class)
        x, y = rng.uniform(0, cfg.width_m), rng.uniform(0, cfg.height_m)
        traj.add(0.0, (float(x), float(y)))
        while traj.last[0] < duration_ms:
            now, here = traj.last
            target = _waypoint(rng, here, flight_m, cfg.width_m, cfg.height_m)
            travel_ms = 1000 * _distance(here, target) / _uniform(rng, speed)
            traj.add(now + travel_ms, target)
            pause_ms = 1000 * _uniform(rng, pause_s)
            if pause_ms > 0:
                traj.add(now + travel_ms + pause_ms, target)
            elif travel_ms == 0:
                traj.add(now + 1000, target)
        trajectories.append(traj)
    return trajectories


def street_grid(width_m: float, height_m: float, spacing_m: float) -> nx.Graph:
    """Grid of streets covering the area, with vertex positions and edge lengths."""
    cols = max(1, int(width_m // spacing_m)) + 1
    rows = max(1, int(height_m // spacing_m)) + 1
    grid = nx.grid_2d_graph(cols, rows)
    graph: nx.Graph = nx.Graph()
    for i, j in grid.nodes:
        graph.add_node(f"v{i}_{j}", pos=(i * spacing_m, j * spacing_m))
    for (a, b), (c, d) in grid.edges:
        graph.add_edge(f"v{a}_{b}", f"v{c}_{d}", length=spacing_m)
    return graph


def read_street_graph(path: Path) -> nx.Graph:
    """Read a street graph from `<id> <x> <y>` and `edge <a> <b>` lines.

    Raises:
        GenerationError: On malformed lines or edges naming unknown vertices

    """
    graph: nx.Graph = nx.Graph()
    for number, text in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        fields = text.split()
        if not fields or fields[0].startswith("#"):
            continue
        try:
            if fields[0] == "edge" and len(fields) == 3:  # noqa: PLR2004
                a, b = fields[1], fields[2]
                if a not in graph or b not in graph:
                    msg = f"{path}:{number}: edge names an unknown vertex"
                    raise GenerationError(msg)
                pa, pb = graph.nodes[a]["pos"], graph.nodes[b]["pos"]
                graph.add_edge(a, b, length=_distance(pa, pb))
            elif len(fields) == 3:  # noqa: PLR2004
                graph.add_node(fields[0], pos=(float(fields[1]), float(fields[2])))
            else:
                msg = f"{path}:{number}: expected '<id> <x> <y>' or 'edge <a> <b>'"
                raise GenerationError(msg)
        except ValueError:
            msg = f"{path}:{number}: bad coordinate in {text.strip()!r}"
            raise GenerationError(msg) from None
    return graph


def gen_graph_walk(  # noqa: PLR0913
    graph: nx.Graph,
    nodes: Sequence[str],
    role: Role,
    cfg: MobilityConfig,
    rng: np.random.Generator,
    *,
    speed: SpeedRange,
    pause_s: SpeedRange,
) -> list[Trajectory]:
    """Walks along the street graph between random vertices.

    Each flight goes along a shortest path to a uniformly chosen vertex at a
    uniform speed, followed by a uniform delay. Nodes never leave the graph.

    Raises:
        GenerationError: If the graph is empty or not connected

    """
    if graph.number_of_nodes() == 0 or not nx.is_connected(graph):
        msg = "Graph walk needs a non-empty connected street graph"
        raise GenerationError(msg)

    vertices = sorted(graph.nodes)
    duration_ms = cfg.duration_s * 1000
    trajectories = []
    for node in nodes:
        traj = Trajectory(node, role)
        vertex = vertices[int(rng.integers(len(vertices)))]
        traj.add(0.0, graph.nodes[vertex]["pos"])
        while traj.last[0] < duration_ms:
            others = [v for v in vertices if v != vertex]
            if not others:
                traj.add(duration_ms, graph.nodes[vertex]["pos"])
                break
            target = others[int(rng.integers(len(others)))]
            path = nx.shortest_path(graph, vertex, target, weight="length")
            velocity = _uniform(rng, speed)
            now = traj.last[0]
            for a, b in zip(path, path[1:], strict=False):
                now += 1000 * graph.edges[a, b]["length"] / velocity
                traj.add(now, graph.nodes[b]["pos"])
            traj.add(now + 1000 * _uniform(rng, pause_s), graph.nodes[target]["pos"])
            vertex = target
        trajectories.append(traj)
    return trajectories


def gen_shuttle(  # noqa: PLR0913
    node: str,
    role: Role,
    route: Sequence[Point],
    cfg: MobilityConfig,
    *,
    velocity: float,
    pause_s: float = 0.0,
) -> Trajectory:
    """Move back and forth along a fixed route, pausing at both ends."""
    if len(route) < 2 or velocity <= 0:  # noqa: PLR2004
        msg = "A shuttle needs a route of at least two points and a positive speed"
        raise GenerationError(msg)

    duration_ms = cfg.duration_s * 1000
    traj = Trajectory(node, role)
    traj.add(0.0, route[0])
    forward = list(route)
    while traj.last[0] < duration_ms:
        now, here = traj.last
        for point in forward[1:]:
            now += 1000 * _distance(here, point) / velocity
            traj.add(now, point)
            here = point
        if pause_s > 0:
            traj.add(now + 1000 * pause_s, here)
        forward.reverse()
    return traj


def crossing_paths(
    width_m: float, height_m: float, spacing_m: float
) -> list[list[Point]]:
    """Straight streets crossing the whole area, in both directions."""
    paths: list[list[Point]] = []
    for x in np.arange(0.0, width_m + 1e-9, spacing_m):
        south, north = (float(x), 0.0), (float(x), height_m)
        paths += [[south, north], [north, south]]
    for y in np.arange(0.0, height_m + 1e-9, spacing_m):
        west, east = (0.0, float(y)), (width_m, float(y))
        paths += [[west, east], [east, west]]
    return paths


def gen_crossing_flow(
    paths: Sequence[Sequence[Point]],
    cfg: MobilityConfig,
    rng: np.random.Generator,
    role: Role = Role.RELAY,
    prefix: str = "p",
) -> list[Trajectory]:
    """Pedestrians entering as a Poisson process, crossing once, then leaving.

    Inter-arrival times are exponential with mean 1 / entry_rate. Each
    pedestrian walks a uniformly chosen path at a uniform speed.

    Raises:
        GenerationError: If the path set is empty

    """
    if not paths:
        msg = "A crossing flow needs at least one path"
        raise GenerationError(msg)
    if cfg.entry_rate == 0:
        return []

    duration_ms = cfg.duration_s * 1000
    arrivals: list[float] = []
    now = float(rng.exponential(1000 / cfg.entry_rate))
    while now < duration_ms:
        arrivals.append(now)
        now += float(rng.exponential(1000 / cfg.entry_rate))

    trajectories = []
    for node, arrival in zip(_ids(prefix, len(arrivals)), arrivals, strict=True):
        path = paths[int(rng.integers(len(paths)))]
        velocity = _uniform(rng, cfg.relay_speed)
        traj = Trajectory(node, role, start_ms=arrival)
        traj.add(arrival, path[0])
        now = arrival
        for a, b in zip(path, path[1:], strict=False):
            now += 1000 * _distance(a, b) / velocity
            traj.add(now, b)
        traj.end_ms = now
        trajectories.append(traj)
    logger.debug("Crossing flow: %d arrivals", len(trajectories))
    return trajectories


def _range(ranges: RangeTable, a: Trajectory, b: Trajectory) -> float:
    low, high = sorted((a.node_class, b.node_class))
    return ranges[low, high]


def range_table(ground_m: float, air_m: float) -> RangeTable:
    """Transmission range per (sorted) node-class pair."""
    return {(GROUND, GROUND): ground_m, (AIR, GROUND): air_m, (AIR, AIR): air_m}


def compute_contacts(
    trajectories: Iterable[Trajectory],
    ranges: RangeTable,
    timestep_ms: int,
    duration_ms: int,
    hysteresis_m: float = 0.0,
) -> list[ScenarioEvent]:
    """Sample positions on a common clock and emit node and edge events.

    A node appears at the first sample at or after its start and disappears
    at the first sample at or after its end. An edge comes up when the pair
    is within range and goes down when it is farther than range plus
    `hysteresis_m`. Edges of a departing node go down before its `nd`.
    """
    order = sorted(trajectories, key=lambda t: t.node)
    if not order:
        return []

    samples = np.arange(0, duration_ms + 1, timestep_ms, dtype=np.int64)
    n = len(order)
    first = np.searchsorted(samples, [t.start_ms for t in order], side="left")
    last = np.array(
        [
            len(samples)
            if t.end_ms is None
            else np.searchsorted(samples, t.end_ms, side="left")
            for t in order
        ]
    )
    xs = np.full((len(samples), n), np.nan)
    ys = np.full((len(samples), n), np.nan)
    for k, traj in enumerate(order):
        if first[k] < last[k]:
            span = slice(first[k], last[k])
            xs[span, k], ys[span, k] = traj.positions(samples[span])

    limit = np.array([[_range(ranges, a, b) for b in order] for a in order])
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    events: list[ScenarioEvent] = []
    edges: set[tuple[int, int]] = set()
    for s, t in enumerate(samples.tolist()):
        dx = xs[s][:, None] - xs[s][None, :]
        dy = ys[s][:, None] - ys[s][None, :]
        dist = np.hypot(dx, dy)
        with np.errstate(invalid="ignore"):
            near = (dist <= limit) & upper
            keep = (dist <= limit + hysteresis_m) & upper
        current = {(int(i), int(j)) for i, j in zip(*np.nonzero(near), strict=True)}
        current |= {e for e in edges if keep[e]}

        for k in np.nonzero(first == s)[0]:
            if last[k] > s:
                events.append(ScenarioEvent.node_start(t, order[k].node, order[k].role))
        for i, j in sorted(edges - current):
            events.append(ScenarioEvent.edge(t, order[i].node, order[j].node, up=False))
        for i, j in sorted(current - edges):
            events.append(ScenarioEvent.edge(t, order[i].node, order[j].node, up=True))
        for k in np.nonzero(last == s)[0]:
            if first[k] < s:
                events.append(ScenarioEvent.node_death(t, order[k].node))
        edges = current

    logger.info("Computed %d contact events for %d nodes", len(events), n)
    return events


def gen_app_scenario(
    replicas: Sequence[str], cfg: MobilityConfig, rng: np.random.Generator
) -> list[ScenarioEvent]:
    """One update per replica per period within the activity window.

    Each replica starts at a uniformly jittered offset within the first
    period, so updates of different replicas are not simultaneous.
    """
    period = cfg.update_period_ms
    count = (cfg.activity_end_ms - cfg.activity_start_ms) // period
    events = []
    for replica in replicas:
        offset = cfg.activity_start_ms + int(rng.integers(period))
        times = [offset + k * period for k in range(count)]
        events += [ScenarioEvent.update(t, replica) for t in times]
    return sorted(events, key=lambda e: (e.time_ms, e.node))


def preset(shape: Shape, **overrides: object) -> MobilityConfig:
    """Default parameters of a scenario shape, with overrides applied."""
    base: dict[str, object] = {"shape": shape}
    if shape is Shape.BUS:
        base |= {
            "width_m": 2000.0,
            "height_m": 2000.0,
            "duration_s": 5 * 3600,
            "replicas": 10,
            "relays": 60,
            "relay_speed": (5.0, 12.0),
            "relay_pause_s": (10.0, 30.0),
            "ground_range_m": 200.0,
            "air_range_m": 200.0,
        }
    elif shape is Shape.DISASTER:
        base |= {
            "width_m": 10_000.0,
            "height_m": 10_000.0,
            "duration_s": 5 * 3600,
            "replicas": 100,
            "relays": 10,
            "replica_speed": (1.0, 2.0),
            "replica_pause_s": (0.0, 10.0),
            "replica_flight_m": 100.0,
            "relay_speed": (5.0, 20.0),
            "relay_pause_s": (0.0, 0.0),
            "relay_flight_m": 15_000.0,
            "ground_range_m": 50.0,
            "air_range_m": 200.0,
        }
    elif shape is Shape.BRIDGE:
        base |= {
            "width_m": 400.0,
            "height_m": 10.0,
            "duration_s": 3600,
            "replicas": 2,
            "relays": 1,
            "relay_speed": (1.0, 1.0),
            "relay_pause_s": (30.0, 30.0),
            "ground_range_m": 50.0,
            "air_range_m": 50.0,
            "activity_start_ms": 60_000,
            "activity_end_ms": 10 * 60_000,
        }
    return MobilityConfig.model_validate(base | overrides)


def _static(nodes: Sequence[str], points: Sequence[Point]) -> list[Trajectory]:
    trajectories = []
    for node, point in zip(nodes, points, strict=True):
        traj = Trajectory(node, Role.REPLICA)
        traj.add(0.0, point)
        trajectories.append(traj)
    return trajectories


def _bus(
    cfg: MobilityConfig, graph: nx.Graph, rng: np.random.Generator
) -> list[Trajectory]:
    vertices = sorted(graph.nodes)
    if cfg.relays and len(vertices) < 2:  # noqa: PLR2004
        msg = "Bus routes need a street graph with at least two vertices"
        raise GenerationError(msg)
    size = min(cfg.replicas, len(vertices))
    spots = rng.choice(len(vertices), size=size, replace=False)
    points = [graph.nodes[vertices[i]]["pos"] for i in spots]
    trajectories = _static(_ids("r", cfg.replicas)[:size], points)
    for relay in _ids("d", cfg.relays):
        a, b = rng.choice(len(vertices), size=2, replace=False)
        stops = nx.shortest_path(graph, vertices[a], vertices[b], weight="length")
        shuttle = gen_shuttle(
            relay,
            Role.RELAY,
            [graph.nodes[v]["pos"] for v in stops],
            cfg,
            velocity=_uniform(rng, cfg.relay_speed),
            pause_s=_uniform(rng, cfg.relay_pause_s),
        )
        trajectories.append(shuttle)
    return trajectories


def _bridge(cfg: MobilityConfig, rng: np.random.Generator) -> list[Trajectory]:
    ends = [(0.0, cfg.height_m / 2), (cfg.width_m, cfg.height_m / 2)]
    placed = _ids("r", cfg.replicas)[:2]
    line: nx.Graph = nx.Graph()
    line.add_node("west", pos=ends[0])
    line.add_node("east", pos=ends[1])
    line.add_edge("west", "east", length=cfg.width_m)
    return _static(placed, ends[: len(placed)]) + gen_graph_walk(
        line,
        _ids("d", cfg.relays),
        Role.RELAY,
        cfg,
        rng,
        speed=cfg.relay_speed,
        pause_s=cfg.relay_pause_s,
    )


def generate(cfg: MobilityConfig, street_graph: nx.Graph | None = None) -> Scenario:
    """Generate the contact trace and application scenario of a shape.

    churn:    graph-walking replicas plus a Poisson flow of crossing pedestrians
    bus:      static replicas spread over the streets plus relays shuttling
              along fixed routes, no churn
    disaster: random-waypoint ground replicas plus random-waypoint drones
    bridge:   two static replicas out of range of each other plus relays
              walking the single street between them

    Raises:
        GenerationError: On unusable inputs such as a disconnected street graph

    """
    rng = np.random.default_rng(cfg.seed)
    graph = street_graph or street_grid(
        cfg.width_m, cfg.height_m, DEFAULT_STREET_SPACING_M
    )

    trajectories: list[Trajectory]
    if cfg.shape is Shape.CHURN:
        trajectories = gen_graph_walk(
            graph,
            _ids("r", cfg.replicas),
            Role.REPLICA,
            cfg,
            rng,
            speed=cfg.replica_speed,
            pause_s=cfg.replica_pause_s,
        )
        paths = crossing_paths(cfg.width_m, cfg.height_m, DEFAULT_STREET_SPACING_M)
        trajectories += gen_crossing_flow(paths, cfg, rng)
    elif cfg.shape is Shape.BUS:
        trajectories = _bus(cfg, graph, rng)
    elif cfg.shape is Shape.DISASTER:
        trajectories = gen_random_waypoint(
            _ids("r", cfg.replicas),
            Role.REPLICA,
            cfg,
            rng,
            speed=cfg.replica_speed,
            pause_s=cfg.replica_pause_s,
            flight_m=cfg.replica_flight_m,
        )
        trajectories += gen_random_waypoint(
            _ids("d", cfg.relays),
            Role.RELAY,
            cfg,
            rng,
            speed=cfg.relay_speed,
            pause_s=cfg.relay_pause_s,
            flight_m=cfg.relay_flight_m,
            node_class=AIR,
        )
    else:
        trajectories = _bridge(cfg, rng)

    ranges = range_table(cfg.ground_range_m, cfg.air_range_m)
    contacts = compute_contacts(
        trajectories, ranges, cfg.timestep_ms, cfg.duration_s * 1000, cfg.hysteresis_m
    )
    replicas = [t.node for t in trajectories if t.role is Role.REPLICA]
    updates = gen_app_scenario(replicas, cfg, rng)
    logger.info(
        "Generated %s scenario: %d contact events, %d updates",
        cfg.shape.value,
        len(contacts),
        len(updates),
    )
    return Scenario(contacts, updates)
