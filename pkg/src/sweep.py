"""Parallel relay-ratio by seed sweeps over independent simulation runs.

Each job runs in a worker process and writes its own output directory, so
runs share nothing. The sweep collects one summary row per job.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import anyio
import anyio.to_process
import anyio.to_thread

from config import (
    APP_SCENARIO_FILE,
    CONTACT_TRACE_FILE,
    SWEEP_CSV,
    MobilityConfig,
    SimConfig,
)
from metrics import ConvergenceLog, summarize, write_report
from mobility import generate
from simulator import simulate, write_run
from tracefmt import (
    parse_app_scenario,
    parse_contact_trace,
    write_app_scenario,
    write_contact_trace,
)
from utils import write_csv

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "relay_ratio",
    "seed",
    "updates",
    "replicas",
    "relays",
    "mean_latency_ms",
    "max_latency_ms",
    "mean_distance",
    "undefined_latencies",
    "converged",
    "syncs",
    "out_dir",
]


@dataclass(frozen=True)
class SweepJob:
    """One run of a sweep.

    Either `trace` (plus an optional `app`) points at scenario files, or
    `mobility` describes a scenario to generate into the run directory.
    """

    config: SimConfig
    out_dir: Path
    trace: Path | None = None
    app: Path | None = None
    mobility: MobilityConfig | None = None


def execute(job: SweepJob) -> dict[str, Any]:
    """Simulate one job, write its log and report, and return its summary row."""
    if job.mobility is not None:
        scenario = generate(job.mobility)
        contacts, updates = scenario.contacts, scenario.updates
        write_contact_trace(contacts, job.out_dir / CONTACT_TRACE_FILE)
        write_app_scenario(updates, job.out_dir / APP_SCENARIO_FILE)
    elif job.trace is not None:
        contacts = parse_contact_trace(job.trace)
        updates = parse_app_scenario(job.app) if job.app else []
    else:
        msg = "A sweep job needs a trace or a mobility configuration"
        raise ValueError(msg)

    result = simulate(contacts, updates, job.config)
    write_run(result, job.out_dir)
    report = summarize(ConvergenceLog.from_events(result.events))
    write_report(report, job.out_dir)
    return {
        "relay_ratio": job.config.relay_ratio,
        "seed": job.config.seed,
        "updates": report.updates,
        "replicas": report.replicas,
        "relays": report.relays,
        "mean_latency_ms": report.mean_latency_ms,
        "max_latency_ms": report.max_latency_ms,
        "mean_distance": report.mean_distance,
        "undefined_latencies": report.undefined_latencies,
        "converged": report.converged,
        "syncs": sum(report.sync_counts.values()),
        "out_dir": str(job.out_dir),
    }


async def run_sweep(
    jobs: Sequence[SweepJob], max_workers: int = 4, *, in_process: bool = False
) -> list[dict[str, Any]]:
    """Run every job, at most `max_workers` at a time; rows keep job order.

    With `in_process` the jobs run in worker threads of this process
    instead of worker processes.
    """
    limiter = anyio.CapacityLimiter(max_workers)
    rows: list[dict[str, Any] | None] = [None] * len(jobs)

    async def run_one(index: int, job: SweepJob) -> None:
        if in_process:
            rows[index] = await anyio.to_thread.run_sync(
                execute, job, limiter=limiter
            )
        else:
            rows[index] = await anyio.to_process.run_sync(
                execute, job, limiter=limiter
            )
        logger.info("Sweep job %d/%d done: %s", index + 1, len(jobs), job.out_dir)

    async with anyio.create_task_group() as tg:
        for index, job in enumerate(jobs):
            tg.start_soon(run_one, index, job)

    return [row for row in rows if row is not None]


def sweep_jobs(  # noqa: PLR0913
    base: SimConfig,
    ratios: Sequence[float],
    seeds: Sequence[int],
    out_dir: Path,
    *,
    trace: Path | None = None,
    app: Path | None = None,
    mobility: MobilityConfig | None = None,
) -> list[SweepJob]:
    """The relay-ratio by seed grid, one output directory per run.

    A generated scenario takes the run's seed, so seeds vary the mobility
    as well as the workload.
    """
    jobs = []
    for ratio in ratios:
        for seed in seeds:
            config = base.model_copy(update={"relay_ratio": ratio, "seed": seed})
            scenario = mobility.model_copy(update={"seed": seed}) if mobility else None
            run_dir = out_dir / f"ratio-{ratio:g}" / f"seed-{seed}"
            jobs.append(SweepJob(config, run_dir, trace, app, scenario))
    return jobs


def write_sweep(rows: Sequence[dict[str, Any]], out_dir: Path) -> Path:
    """Write sweep.csv with one row per run."""
    path = out_dir / SWEEP_CSV
    values = [
        ["" if row[c] is None else row[c] for c in SWEEP_COLUMNS] for row in rows
    ]
    write_csv(path, SWEEP_COLUMNS, values)
    logger.info("Wrote %d sweep rows to %s", len(rows), path)
    return path
