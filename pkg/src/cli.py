"""Command line entry point: generate scenarios, simulate, report and check."""

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

import anyio
from pydantic import ValidationError

from config import (
    APP_SCENARIO_FILE,
    CONTACT_TRACE_FILE,
    DEFAULT_LOG_LEVEL,
    ERR_INPUT,
    ERR_INVARIANT,
    ERR_USAGE,
    EVENT_LOG_FILE,
    EXIT_OK,
    LOG_LEVEL_ENV,
    LOG_LEVELS,
    Mode,
    Payload,
    Propagation,
    ReplyStrategy,
    RunConfig,
    Selection,
    Shape,
    default_output_dir,
    load_env,
    load_run_config,
)
from exceptions import (
    DecodeError,
    GenerationError,
    InvariantViolation,
    ScenarioError,
    TraceParseError,
    UsageError,
)
from invariants import replay_log
from metrics import ConvergenceLog, summarize, write_report
from mobility import generate, preset, read_street_graph
from simulator import simulate, write_run
from sweep import run_sweep, sweep_jobs, write_sweep
from tracefmt import (
    parse_app_scenario,
    parse_contact_trace,
    write_app_scenario,
    write_contact_trace,
)
from utils import read_jsonl, setup_logging

logger = logging.getLogger(__name__)

INPUT_ERRORS = (
    TraceParseError,
    ScenarioError,
    GenerationError,
    DecodeError,
    OSError,
    json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def _values(enum: type) -> list[str]:
    return [member.value for member in enum]


def build_parser() -> argparse.ArgumentParser:
    """Parser for every subcommand; unset flags stay None so files can fill them."""
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file mirroring the flags")
    common.add_argument(
        "--logging",
        choices=LOG_LEVELS.keys(),
        default=None,
        help=f"Log level (default: ${LOG_LEVEL_ENV} or {DEFAULT_LOG_LEVEL})",
    )
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--seed", type=int)

    scenario = _Parser(add_help=False)
    scenario.add_argument("--trace", type=Path, help="Contact trace file")
    scenario.add_argument("--app", type=Path, help="Application scenario file")

    protocol = _Parser(add_help=False)
    protocol.add_argument("--relay-ratio", type=float)
    protocol.add_argument("--latency-base-ms", type=int)
    protocol.add_argument("--latency-size-factor", type=float)
    protocol.add_argument("--cooldown-ms", type=int)
    protocol.add_argument("--mode", choices=_values(Mode))
    protocol.add_argument("--propagation", choices=_values(Propagation))
    protocol.add_argument("--period-ms", type=int)
    protocol.add_argument("--selection", choices=_values(Selection))
    protocol.add_argument("--reply", choices=_values(ReplyStrategy))
    protocol.add_argument("--payload", choices=_values(Payload))

    mobility = _Parser(add_help=False)
    mobility.add_argument("--shape", choices=_values(Shape))
    mobility.add_argument("--replicas", type=int)
    mobility.add_argument("--relays", type=int)
    mobility.add_argument("--rate", type=float, help="Crossing arrivals per second")
    mobility.add_argument("--duration-s", type=int)
    mobility.add_argument("--timestep-ms", type=int)
    mobility.add_argument("--street-graph", type=Path)

    parser = _Parser(description="Relay-based synchronization of CRDT replicas")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common, mobility], help="Generate a scenario")
    sim = sub.add_parser("sim", parents=[common, scenario, protocol], help="Simulate")
    sim.add_argument("--check-invariants", action="store_true", default=None)
    for name, text in (("report", "Compute metrics"), ("check", "Replay invariants")):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument("--log-dir", type=Path, help="Directory of a simulated run")
    sweep = sub.add_parser(
        "sweep", parents=[common, scenario, protocol, mobility], help="Run a sweep"
    )
    sweep.add_argument("--ratios", type=float, nargs="+")
    sweep.add_argument("--seeds", type=int, nargs="+")
    sweep.add_argument("--workers", type=int)
    return parser


def _output_dir(cfg: RunConfig) -> Path:
    return cfg.out if cfg.out is not None else default_output_dir()


def _log_dir(cfg: RunConfig) -> Path:
    return cfg.log_dir if cfg.log_dir is not None else _output_dir(cfg)


def cmd_gen(cfg: RunConfig) -> int:
    """Write a contact trace and an application scenario for a shape."""
    mobility = preset(cfg.shape, **cfg.mobility_overrides())
    graph = read_street_graph(cfg.street_graph) if cfg.street_graph else None
    scenario = generate(mobility, graph)
    out = _output_dir(cfg)
    write_contact_trace(scenario.contacts, out / CONTACT_TRACE_FILE)
    write_app_scenario(scenario.updates, out / APP_SCENARIO_FILE)
    return EXIT_OK


def cmd_sim(cfg: RunConfig) -> int:
    """Simulate one run and write its event log and convergence timelines."""
    if cfg.trace is None:
        msg = "sim needs --trace"
        raise UsageError(msg)
    contacts = parse_contact_trace(cfg.trace)
    updates = parse_app_scenario(cfg.app) if cfg.app else []
    result = simulate(contacts, updates, cfg.sim_config())
    write_run(result, _output_dir(cfg))
    logger.info(
        "Run ended at %d ms, converged: %s, distances: %s",
        result.end_ms,
        result.converged,
        result.distances,
    )
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    """Compute the metrics of a simulated run."""
    events = read_jsonl(_log_dir(cfg) / EVENT_LOG_FILE)
    report = summarize(ConvergenceLog.from_events(events))
    write_report(report, cfg.out or _log_dir(cfg))
    logger.info(
        "Mean latency %s ms, %d undefined latencies, converged: %s",
        report.mean_latency_ms,
        report.undefined_latencies,
        report.converged,
    )
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    """Replay a run's event log against every invariant."""
    path = _log_dir(cfg) / EVENT_LOG_FILE
    violations = replay_log(read_jsonl(path))
    for violation in violations:
        logger.error("Invariant violated: %s", violation)
    if violations:
        return ERR_INVARIANT
    logger.info("All invariants hold on %s", path)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    """Run the relay-ratio by seed grid in parallel worker processes."""
    mobility = None
    if cfg.trace is None:
        mobility = preset(cfg.shape, **cfg.mobility_overrides())
    out = _output_dir(cfg)
    jobs = sweep_jobs(
        cfg.sim_config(),
        cfg.ratios,
        cfg.seeds,
        out,
        trace=cfg.trace,
        app=cfg.app,
        mobility=mobility,
    )
    rows = anyio.run(run_sweep, jobs, cfg.workers)
    write_sweep(rows, out)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "sim": cmd_sim,
    "report": cmd_report,
    "check": cmd_check,
    "sweep": cmd_sweep,
}


def run(argv: Sequence[str]) -> int:
    """Parse `argv`, run the subcommand and map failures to exit codes."""
    load_env()
    try:
        args = vars(build_parser().parse_args(argv))
        level = args.pop("logging") or os.getenv(LOG_LEVEL_ENV, DEFAULT_LOG_LEVEL)
        if level not in LOG_LEVELS:
            msg = f"Unknown log level {level!r}"
            raise UsageError(msg)
        setup_logging(level)
        cfg = load_run_config(args.pop("config"), args)
        return COMMANDS[cfg.subcommand](cfg)
    except (UsageError, ValidationError) as e:
        logger.error("Usage error: %s", e)  # noqa: TRY400
        return ERR_USAGE
    except InvariantViolation as e:
        logger.error("Invariant violated: %s", e)  # noqa: TRY400
        return ERR_INVARIANT
    except INPUT_ERRORS as e:
        logger.error("Input error: %s", e)  # noqa: TRY400
        return ERR_INPUT


def main() -> None:
    """Run the command line interface."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
