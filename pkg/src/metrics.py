"""Convergence metrics and synchronization statistics computed from event logs.

The global vector V_G(t) accounts for every update as soon as it is issued.
The convergence distance of replica i at time t is the number of updates in
V_G(t) that replica i has not seen yet. The convergence latency of replica i
for an update time t is the delay until replica i's vector first reaches
V_G(t) pointwise (reaching beyond it counts).

Averages over replicas are plain means. The overall mean latency is the mean
of the per-update-event average latencies; undefined latencies (the replica
never caught up before the end of the log) are left out and counted apart.
"""

import bisect
import logging
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any

from pydantic import BaseModel

from config import (
    DISTANCE_CSV,
    LATENCY_CSV,
    STORE_HIST_CSV,
    SUMMARY_JSON,
    TRANSFER_HIST_CSV,
)
from exceptions import InvariantViolation
from invariants import CAUSAL_SAFETY
from rbss.versioning import VersionVector, over, total
from utils import write_csv, write_json

logger = logging.getLogger(__name__)

Timeline = list[tuple[int, VersionVector]]

REPLICA = "replica"
RELAY = "relay"


@dataclass(frozen=True, slots=True)
class TransferEvent:
    """States sent by one side of a synchronization."""

    t: int
    src: str
    dst: str
    kind: str
    states: int


@dataclass
class ConvergenceLog:
    """Timelines of the global and per-replica vectors plus sync statistics."""

    end_ms: int = 0
    global_timeline: Timeline = field(default_factory=list)
    replica_timelines: dict[str, Timeline] = field(default_factory=dict)
    spans: dict[str, tuple[int, int | None]] = field(default_factory=dict)
    relays: set[str] = field(default_factory=set)
    transfers: list[TransferEvent] = field(default_factory=list)
    store_samples: list[tuple[int, str, int]] = field(default_factory=list)

    @classmethod
    def from_events(cls, events: Iterable[dict[str, Any]]) -> "ConvergenceLog":
        """Build the log from simulator event records, in log order."""
        log = cls()
        store_size: dict[str, int] = {}
        for event in events:
            t = int(event.get("t", 0))
            log.end_ms = max(log.end_ms, t)
            match event.get("type"):
                case "node" if event.get("role") == "rep":
                    log.spans[event["node"]] = (t, None)
                    log.replica_timelines.setdefault(event["node"], [])
                case "node" if event.get("role") == "rel":
                    log.relays.add(event["node"])
                    store_size[event["node"]] = 0
                case "node" if not event.get("up") and event["node"] in log.spans:
                    start, _ = log.spans[event["node"]]
                    log.spans[event["node"]] = (start, t)
                case "global":
                    log.global_timeline.append((t, VersionVector.parse(event["vv"])))
                case "vv":
                    timeline = log.replica_timelines.setdefault(event["node"], [])
                    timeline.append((t, VersionVector.parse(event["vv"])))
                case "store":
                    store_size[event["node"]] = int(event["size"])
                case "sync":
                    transfer = TransferEvent(
                        t,
                        event["src"],
                        event["dst"],
                        event["kind"],
                        int(event["states"]),
                    )
                    log.transfers.append(transfer)
                    for node in (transfer.src, transfer.dst):
                        if node in store_size:
                            log.store_samples.append((t, node, store_size[node]))
        return log

    @property
    def update_times(self) -> list[int]:
        """Distinct update times, ascending."""
        return sorted({t for t, _ in self.global_timeline})

    def global_at(self, t: int) -> VersionVector:
        """V_G after every update issued at or before `t`."""
        i = bisect.bisect_right(self.global_timeline, t, key=lambda e: e[0])
        return self.global_timeline[i - 1][1] if i else VersionVector()

    def replica_at(self, replica: str, t: int) -> VersionVector:
        """Vector of `replica` after every change at or before `t`."""
        timeline = self.replica_timelines.get(replica, [])
        i = bisect.bisect_right(timeline, t, key=lambda e: e[0])
        return timeline[i - 1][1] if i else VersionVector()

    def alive(self, replica: str, t: int) -> bool:
        """True iff `replica` started at or before `t` and had not died by then."""
        start, death = self.spans.get(replica, (0, None))
        return start <= t and (death is None or t < death)

    def to_json(self) -> dict[str, Any]:
        """Plain rendering for convergence.json."""
        return {
            "end_ms": self.end_ms,
            "global": [[t, vv.render()] for t, vv in self.global_timeline],
            "replicas": {
                rid: [[t, vv.render()] for t, vv in timeline]
                for rid, timeline in sorted(self.replica_timelines.items())
            },
            "transfers": [
                [e.t, e.src, e.dst, e.kind, e.states] for e in self.transfers
            ],
            "stores": [list(s) for s in self.store_samples],
        }


def distance(global_vv: VersionVector, vv: VersionVector) -> int:
    """Number of updates in `global_vv` not seen in `vv`.

    Raises:
        InvariantViolation: If `vv` is ahead of `global_vv` anywhere

    """
    if over(vv, global_vv):
        detail = f"{vv} is ahead of global {global_vv}"
        raise InvariantViolation(CAUSAL_SAFETY, detail)
    return total(global_vv) - total(vv)


def latency(log: ConvergenceLog, t: int, replica: str) -> int | None:
    """Delay until `replica` reaches V_G(t), or None if it never does."""
    target = log.global_at(t)
    death = log.spans.get(replica, (0, None))[1]
    timeline = log.replica_timelines.get(replica, [])
    if not over(target, log.replica_at(replica, t)):
        return 0
    for time, vv in timeline:
        if time <= t:
            continue
        if death is not None and time >= death:
            return None
        if not over(target, vv):
            return time - t
    return None


def replica_latencies(log: ConvergenceLog, replica: str) -> dict[int, int | None]:
    """Latency of `replica` for every update time, in one forward scan.

    Catch-up times never decrease because V_G only grows, so a single
    pointer over the replica timeline serves all update times.
    """
    timeline = log.replica_timelines.get(replica, [])
    death = log.spans.get(replica, (0, None))[1]
    result: dict[int, int | None] = {}
    i = j = 0
    current = VersionVector()
    for t in log.update_times:
        target = log.global_at(t)
        while i < len(timeline) and timeline[i][0] <= t:
            current = timeline[i][1]
            i += 1
        if not over(target, current):
            result[t] = 0
            continue
        j = max(i, j)
        while j < len(timeline) and over(target, timeline[j][1]):
            j += 1
        if j < len(timeline) and (death is None or timeline[j][0] < death):
            result[t] = timeline[j][0] - t
        else:
            result[t] = None
    return result


class CurvePoint(BaseModel):
    """Min, max and mean across replicas at one time."""

    t_ms: int
    min: float | None
    max: float | None
    avg: float | None
    undefined: int = 0


class Report(BaseModel):
    """Summary of one run (summary.json)."""

    end_ms: int
    updates: int
    replicas: int
    relays: int
    mean_latency_ms: float | None
    max_latency_ms: int | None
    mean_distance: float | None
    defined_latencies: int
    undefined_latencies: int
    final_distances: dict[str, int]
    converged: bool
    sync_counts: dict[str, int]
    store_histogram: dict[str, dict[int, int]]
    transfer_histogram: dict[str, dict[int, int]]
    relay_transfers_at_most_one: float | None
    latency_curve: list[CurvePoint]
    distance_curve: list[CurvePoint]


def _curve(t: int, values: list[int], undefined: int = 0) -> CurvePoint:
    if not values:
        return CurvePoint(t_ms=t, min=None, max=None, avg=None, undefined=undefined)
    return CurvePoint(
        t_ms=t, min=min(values), max=max(values), avg=fmean(values), undefined=undefined
    )


def _role(log: ConvergenceLog, node: str) -> str:
    return RELAY if node in log.relays else REPLICA


def _histograms(log: ConvergenceLog) -> tuple[dict[str, Counter], dict[str, Counter]]:
    stores: dict[str, Counter] = {REPLICA: Counter(), RELAY: Counter()}
    transfers: dict[str, Counter] = {REPLICA: Counter(), RELAY: Counter()}
    for _, _, size in log.store_samples:
        stores[RELAY][size] += 1
    for event in log.transfers:
        transfers[_role(log, event.src)][event.states] += 1
        for node in (event.src, event.dst):
            if node in log.replica_timelines:
                stores[REPLICA][0 if not log.replica_at(node, event.t) else 1] += 1
    return stores, transfers


def summarize(log: ConvergenceLog) -> Report:
    """Compute every metric of a run; a pure function of the log."""
    replicas = sorted(log.replica_timelines)
    per_replica = {rid: replica_latencies(log, rid) for rid in replicas}

    latency_curve, distance_curve = [], []
    defined = undefined = 0
    for t in log.update_times:
        live = [rid for rid in replicas if log.alive(rid, t)]
        values = [per_replica[rid][t] for rid in live]
        known = [v for v in values if v is not None]
        defined += len(known)
        undefined += len(values) - len(known)
        latency_curve.append(_curve(t, known, len(values) - len(known)))
        target = log.global_at(t)
        distance_curve.append(
            _curve(t, [distance(target, log.replica_at(rid, t)) for rid in live])
        )

    final_target = log.global_at(log.end_ms)
    final = {
        rid: distance(final_target, log.replica_at(rid, log.end_ms))
        for rid in replicas
        if log.alive(rid, log.end_ms)
    }
    averages = [p.avg for p in latency_curve if p.avg is not None]
    distances = [p.avg for p in distance_curve if p.avg is not None]
    maxima = [p.max for p in latency_curve if p.max is not None]
    stores, transfers = _histograms(log)
    relay_syncs = sum(transfers[RELAY].values())
    frugal = transfers[RELAY][0] + transfers[RELAY][1]

    return Report(
        end_ms=log.end_ms,
        updates=total(final_target),
        replicas=len(replicas),
        relays=len(log.relays),
        mean_latency_ms=fmean(averages) if averages else None,
        max_latency_ms=int(max(maxima)) if maxima else None,
        mean_distance=fmean(distances) if distances else None,
        defined_latencies=defined,
        undefined_latencies=undefined,
        final_distances=final,
        converged=all(d == 0 for d in final.values()),
        sync_counts=dict(sorted(Counter(e.kind for e in log.transfers).items())),
        store_histogram={k: dict(sorted(v.items())) for k, v in stores.items()},
        transfer_histogram={k: dict(sorted(v.items())) for k, v in transfers.items()},
        relay_transfers_at_most_one=frugal / relay_syncs if relay_syncs else None,
        latency_curve=latency_curve,
        distance_curve=distance_curve,
    )


def _curve_rows(curve: list[CurvePoint]) -> list[list[object]]:
    return [
        [p.t_ms, _cell(p.min), _cell(p.max), _cell(p.avg), p.undefined] for p in curve
    ]


def _cell(value: float | None) -> object:
    if value is None:
        return ""
    return int(value) if float(value).is_integer() else round(value, 3)


def _hist_rows(hist: dict[str, dict[int, int]]) -> list[list[object]]:
    return [
        [role, size, count]
        for role in (REPLICA, RELAY)
        for size, count in hist.get(role, {}).items()
    ]


def write_report(report: Report, out_dir: Path) -> list[Path]:
    """Write the CSV files and summary.json; returns the written paths."""
    paths = [out_dir / name for name in (LATENCY_CSV, DISTANCE_CSV)]
    header = ["t_ms", "min", "max", "avg", "undefined"]
    write_csv(paths[0], header, _curve_rows(report.latency_curve))
    write_csv(paths[1], header, _curve_rows(report.distance_curve))

    paths += [out_dir / STORE_HIST_CSV, out_dir / TRANSFER_HIST_CSV]
    stores = _hist_rows(report.store_histogram)
    write_csv(paths[2], ["role", "store_size", "count"], stores)
    transfers = _hist_rows(report.transfer_histogram)
    write_csv(paths[3], ["role", "states_sent", "count"], transfers)

    curves = {"latency_curve", "distance_curve"}
    summary = report.model_dump(mode="json", exclude=curves)
    paths.append(out_dir / SUMMARY_JSON)
    write_json(paths[4], summary)
    logger.info("Wrote report files to %s", out_dir)
    return paths
