"""Text formats of contact traces and application scenarios.

One event per line, fields separated by whitespace, time in milliseconds:

    <t> ns <id> <rep|rel|none>    node starts with a role
    <t> nd <id>                   node dies
    <t> ea <a> <b>                edge between a and b comes up
    <t> ed <a> <b>                edge between a and b goes down
    <t> up <id>                   replica issues one update

Blank lines and lines starting with `#` are ignored. Times are non-negative
integers and never decrease within a file. Contact traces hold the first
four kinds, application scenarios only `up` lines. See docs/formats.md.
"""

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from exceptions import TraceParseError

logger = logging.getLogger(__name__)


class Role(str, Enum):
    """Role of a node as written in a contact trace."""

    REPLICA = "rep"
    RELAY = "rel"
    NONE = "none"


class EventKind(str, Enum):
    """Event keyword."""

    NODE_START = "ns"
    NODE_DEATH = "nd"
    EDGE_ADD = "ea"
    EDGE_DEL = "ed"
    UPDATE = "up"


CONTACT_KINDS = frozenset(
    {
        EventKind.NODE_START,
        EventKind.NODE_DEATH,
        EventKind.EDGE_ADD,
        EventKind.EDGE_DEL,
    }
)
APP_KINDS = frozenset({EventKind.UPDATE})

_ARITY = {
    EventKind.NODE_START: 2,
    EventKind.NODE_DEATH: 1,
    EventKind.EDGE_ADD: 2,
    EventKind.EDGE_DEL: 2,
    EventKind.UPDATE: 1,
}


@dataclass(frozen=True, slots=True)
class ScenarioEvent:
    """Timestamped contact or application event."""

    time_ms: int
    kind: EventKind
    nodes: tuple[str, ...]
    role: Role | None = None

    @property
    def node(self) -> str:
        """First (or only) node of the event."""
        return self.nodes[0]

    def render(self) -> str:
        """Trace line for this event."""
        fields = [str(self.time_ms), self.kind.value, *self.nodes]
        if self.role is not None:
            fields.append(self.role.value)
        return " ".join(fields)

    @classmethod
    def node_start(cls, time_ms: int, node: str, role: Role) -> "ScenarioEvent":
        """Build an `ns` event."""
        return cls(time_ms, EventKind.NODE_START, (node,), role)

    @classmethod
    def node_death(cls, time_ms: int, node: str) -> "ScenarioEvent":
        """Build an `nd` event."""
        return cls(time_ms, EventKind.NODE_DEATH, (node,))

    @classmethod
    def edge(cls, time_ms: int, a: str, b: str, *, up: bool) -> "ScenarioEvent":
        """Build an `ea` or `ed` event with endpoints in sorted order."""
        kind = EventKind.EDGE_ADD if up else EventKind.EDGE_DEL
        return cls(time_ms, kind, tuple(sorted((a, b))))

    @classmethod
    def update(cls, time_ms: int, replica: str) -> "ScenarioEvent":
        """Build an `up` event."""
        return cls(time_ms, EventKind.UPDATE, (replica,))


def _parse_line(
    text: str, allowed: frozenset[EventKind], path: Path | None, line: int
) -> ScenarioEvent:
    fields = text.split()

    def fail(reason: str) -> TraceParseError:
        return TraceParseError(f"{reason}: {text.strip()!r}", path=path, line=line)

    if len(fields) < 2:  # noqa: PLR2004
        raise fail("Expected a time and an event keyword")
    if not (fields[0].isascii() and fields[0].isdigit()):
        raise fail("Time must be a non-negative integer of milliseconds")
    try:
        kind = EventKind(fields[1])
    except ValueError:
        raise fail(f"Unknown event keyword {fields[1]!r}") from None
    if kind not in allowed:
        raise fail(f"Event {kind.value!r} is not allowed in this file")

    args = fields[2:]
    if len(args) != _ARITY[kind]:
        raise fail(f"Event {kind.value!r} takes {_ARITY[kind]} arguments")

    time_ms = int(fields[0])
    if kind is EventKind.NODE_START:
        try:
            role = Role(args[1])
        except ValueError:
            raise fail(f"Unknown role {args[1]!r}") from None
        return ScenarioEvent.node_start(time_ms, args[0], role)
    if kind in (EventKind.EDGE_ADD, EventKind.EDGE_DEL):
        if args[0] == args[1]:
            raise fail("An edge needs two distinct nodes")
        up = kind is EventKind.EDGE_ADD
        return ScenarioEvent.edge(time_ms, args[0], args[1], up=up)
    return ScenarioEvent(time_ms, kind, (args[0],))


def _parse(
    source: Path | Iterable[str], allowed: frozenset[EventKind]
) -> list[ScenarioEvent]:
    path = source if isinstance(source, Path) else None
    lines = path.read_text(encoding="utf-8").splitlines() if path else source

    events: list[ScenarioEvent] = []
    last_time = 0
    for number, text in enumerate(lines, start=1):
        stripped = text.strip()
        if not stripped or stripped.startswith("#"):
            continue
        event = _parse_line(stripped, allowed, path, number)
        if event.time_ms < last_time:
            msg = f"Time {event.time_ms} goes back before {last_time}"
            raise TraceParseError(msg, path=path, line=number)
        last_time = event.time_ms
        events.append(event)

    logger.debug("Parsed %d events from %s", len(events), path or "memory")
    return events


def parse_contact_trace(source: Path | Iterable[str]) -> list[ScenarioEvent]:
    """Parse a contact trace from a file or from lines.

    Raises:
        TraceParseError: On the first malformed line, with its line number

    """
    return _parse(source, CONTACT_KINDS)


def parse_app_scenario(source: Path | Iterable[str]) -> list[ScenarioEvent]:
    """Parse an application scenario (`up` lines only) from a file or from lines.

    Raises:
        TraceParseError: On the first malformed line, with its line number

    """
    return _parse(source, APP_KINDS)


def merge_scenarios(
    contacts: Sequence[ScenarioEvent], updates: Sequence[ScenarioEvent]
) -> list[ScenarioEvent]:
    """Interleave both scenarios by time; contact events go first at equal times."""
    tagged = [(e.time_ms, 0, i, e) for i, e in enumerate(contacts)]
    tagged += [(e.time_ms, 1, i, e) for i, e in enumerate(updates)]
    return [e for *_, e in sorted(tagged, key=lambda t: t[:3])]


def render_events(events: Iterable[ScenarioEvent]) -> str:
    """Trace text for `events`, one line each."""
    return "".join(e.render() + "\n" for e in events)


def write_contact_trace(events: Iterable[ScenarioEvent], path: Path) -> None:
    """Write a contact trace file."""
    _write(events, path, CONTACT_KINDS)


def write_app_scenario(events: Iterable[ScenarioEvent], path: Path) -> None:
    """Write an application scenario file."""
    _write(events, path, APP_KINDS)


def _write(
    events: Iterable[ScenarioEvent], path: Path, allowed: frozenset[EventKind]
) -> None:
    events = list(events)
    wrong = [e for e in events if e.kind not in allowed]
    if wrong:
        msg = f"Cannot write {wrong[0].kind.value!r} events to {path}"
        raise ValueError(msg)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_events(events), encoding="utf-8", newline="\n")
    logger.info("Wrote %d events to %s", len(events), path)
