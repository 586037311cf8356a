"""Configuration constants and models for the relay-based synchronization simulator."""

import json
import os
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Logging Configuration
DEFAULT_LOG_LEVEL = "info"
LOG_LEVELS = {"debug": "DEBUG", "info": "INFO", "warn": "WARNING", "error": "ERROR"}

# Exit Codes
EXIT_OK = 0
ERR_USAGE = 1
ERR_INPUT = 2
ERR_INVARIANT = 3

# Environment
DOT_ENV_FILE = ".env"
OUTPUT_DIR_ENV = "RBSS_OUTPUT_DIR"
LOG_LEVEL_ENV = "RBSS_LOG_LEVEL"
DEFAULT_OUTPUT_DIR = "out"

# Transmission model (milliseconds)
DEFAULT_LATENCY_BASE_MS = 50
DEFAULT_LATENCY_SIZE_FACTOR = 0.0
DEFAULT_COOLDOWN_MS = 30 * 60 * 1000
DEFAULT_PERIOD_MS = 10_000

# Contact computation
DEFAULT_TIMESTEP_MS = 1000
MIN_TIMESTEP_MS = 100
DEFAULT_STREET_SPACING_M = 100.0

# Application scenario: one update per replica per minute in [00:05, 04:30]
DEFAULT_UPDATE_PERIOD_MS = 60_000
DEFAULT_ACTIVITY_START_MS = 5 * 60 * 1000
DEFAULT_ACTIVITY_END_MS = (4 * 60 + 30) * 60 * 1000

# Output file names
CONTACT_TRACE_FILE = "contacts.trace"
APP_SCENARIO_FILE = "updates.trace"
EVENT_LOG_FILE = "events.jsonl"
CONVERGENCE_FILE = "convergence.json"
LATENCY_CSV = "latency.csv"
DISTANCE_CSV = "distance.csv"
STORE_HIST_CSV = "store_hist.csv"
TRANSFER_HIST_CSV = "transfer_hist.csv"
SUMMARY_JSON = "summary.json"
SWEEP_CSV = "sweep.csv"


class Mode(str, Enum):
    """Protocol generation: single-message transfers or the enhanced protocol."""

    BASIC = "basic"
    ENHANCED = "enhanced"


class Propagation(str, Enum):
    """When inflations are pushed to current neighbors."""

    IMMEDIATE = "immediate"
    PERIODIC = "periodic"


class Selection(str, Enum):
    """Strategy used by relays to pick the states they send."""

    SINGLES = "singles"
    GREEDY = "greedy"


class ReplyStrategy(str, Enum):
    """When a replica returns its state to a relay during a session."""

    FINAL = "final"
    INCREMENTAL = "incremental"


class Payload(str, Enum):
    """Reference CRDT hosted by replicas in simulations."""

    ORMAP = "ormap"
    GCOUNTER = "gcounter"


class Shape(str, Enum):
    """Scenario shapes the generator knows."""

    CHURN = "churn"
    BUS = "bus"
    DISASTER = "disaster"
    BRIDGE = "bridge"


Ratio = Annotated[float, Field(ge=0.0, le=1.0)]


class ProtocolConfig(BaseModel):
    """Switches selecting protocol variants."""

    model_config = ConfigDict(frozen=True)

    mode: Mode = Mode.ENHANCED
    propagation: Propagation = Propagation.IMMEDIATE
    period_ms: int = Field(default=DEFAULT_PERIOD_MS, gt=0)
    selection: Selection = Selection.SINGLES
    reply: ReplyStrategy = ReplyStrategy.FINAL


class LatencyModel(BaseModel):
    """Per-message latency: base + size_factor * payload bytes."""

    model_config = ConfigDict(frozen=True)

    base_ms: int = Field(default=DEFAULT_LATENCY_BASE_MS, ge=0)
    size_factor: float = Field(default=DEFAULT_LATENCY_SIZE_FACTOR, ge=0)

    def delay(self, size: int) -> int:
        """Return the transmission delay in whole milliseconds."""
        return self.base_ms + round(self.size_factor * size)


class SimConfig(BaseModel):
    """Everything a single simulation run depends on besides its inputs."""

    model_config = ConfigDict(frozen=True)

    protocol: ProtocolConfig = ProtocolConfig()
    latency: LatencyModel = LatencyModel()
    payload: Payload = Payload.ORMAP
    seed: int = 0
    cooldown_ms: int = Field(default=DEFAULT_COOLDOWN_MS, ge=0)
    relay_ratio: Ratio | None = None
    check_invariants: bool = False


class RunConfig(BaseModel):
    """Command line surface; may also be loaded from a JSON config file."""

    model_config = ConfigDict(extra="forbid")

    subcommand: Literal["gen", "sim", "report", "check", "sweep"] = "sim"
    trace: Path | None = None
    app: Path | None = None
    relay_ratio: Ratio | None = None
    seed: int = 0
    latency_base_ms: int = Field(default=DEFAULT_LATENCY_BASE_MS, ge=0)
    latency_size_factor: float = Field(default=DEFAULT_LATENCY_SIZE_FACTOR, ge=0)
    cooldown_ms: int = Field(default=DEFAULT_COOLDOWN_MS, ge=0)
    out: Path | None = None
    mode: Mode = Mode.ENHANCED
    propagation: Propagation = Propagation.IMMEDIATE
    period_ms: int = Field(default=DEFAULT_PERIOD_MS, gt=0)
    selection: Selection = Selection.SINGLES
    reply: ReplyStrategy = ReplyStrategy.FINAL
    payload: Payload = Payload.ORMAP
    check_invariants: bool = False
    log_dir: Path | None = None
    shape: Shape = Shape.CHURN
    replicas: int | None = Field(default=None, ge=0)
    relays: int | None = Field(default=None, ge=0)
    rate: float | None = Field(default=None, ge=0)
    duration_s: int | None = Field(default=None, gt=0)
    timestep_ms: int | None = Field(default=None, ge=MIN_TIMESTEP_MS)
    street_graph: Path | None = None
    ratios: list[Ratio] = Field(default_factory=lambda: [0.0, 0.5, 1.0])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    workers: int = Field(default=4, gt=0)

    def sim_config(self) -> SimConfig:
        """Project the run configuration onto a simulation configuration."""
        return SimConfig(
            protocol=ProtocolConfig(
                mode=self.mode,
                propagation=self.propagation,
                period_ms=self.period_ms,
                selection=self.selection,
                reply=self.reply,
            ),
            latency=LatencyModel(
                base_ms=self.latency_base_ms, size_factor=self.latency_size_factor
            ),
            payload=self.payload,
            seed=self.seed,
            cooldown_ms=self.cooldown_ms,
            relay_ratio=self.relay_ratio,
            check_invariants=self.check_invariants,
        )

    def mobility_overrides(self) -> dict[str, object]:
        """Generator parameters given for this run, keyed by mobility field."""
        values = {
            "replicas": self.replicas,
            "relays": self.relays,
            "entry_rate": self.rate,
            "duration_s": self.duration_s,
            "timestep_ms": self.timestep_ms,
        }
        return {k: v for k, v in values.items() if v is not None} | {"seed": self.seed}


def load_env() -> None:
    """Load environment variables from a .env file if one exists."""
    env_file = Path(DOT_ENV_FILE)
    if env_file.exists():
        load_dotenv(env_file)


def default_output_dir() -> Path:
    """Output directory from the environment, falling back to the default."""
    load_env()
    return Path(os.getenv(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


def load_run_config(path: Path | None, overrides: dict[str, object]) -> RunConfig:
    """Build a run configuration from an optional JSON file and flag overrides.

    Flags that were given on the command line override file values.

    """
    values: dict[str, object] = {}
    if path is not None:
        with path.open("r") as f:
            values |= json.load(f)

    values |= {k: v for k, v in overrides.items() if v is not None}
    return RunConfig.model_validate(values)


SpeedRange = tuple[float, float]


class MobilityConfig(BaseModel):
    """Parameters of a synthetic scenario (distances in m, speeds in m/s)."""

    model_config = ConfigDict(frozen=True)

    shape: Shape = Shape.CHURN
    width_m: float = Field(default=200.0, gt=0)
    height_m: float = Field(default=200.0, gt=0)
    duration_s: int = Field(default=5 * 3600, gt=0)
    replicas: int = Field(default=5, ge=0)
    relays: int = Field(default=0, ge=0)
    replica_speed: SpeedRange = (0.3, 1.5)
    replica_pause_s: SpeedRange = (10.0, 60.0)
    replica_flight_m: float = Field(default=100.0, gt=0)
    relay_speed: SpeedRange = (0.6, 2.0)
    relay_pause_s: SpeedRange = (0.0, 0.0)
    relay_flight_m: float = Field(default=15_000.0, gt=0)
    entry_rate: float = Field(default=0.01, ge=0)
    ground_range_m: float = Field(default=15.0, gt=0)
    air_range_m: float = Field(default=15.0, gt=0)
    hysteresis_m: float = Field(default=0.0, ge=0)
    timestep_ms: int = Field(default=DEFAULT_TIMESTEP_MS, ge=MIN_TIMESTEP_MS)
    update_period_ms: int = Field(default=DEFAULT_UPDATE_PERIOD_MS, gt=0)
    activity_start_ms: int = Field(default=DEFAULT_ACTIVITY_START_MS, ge=0)
    activity_end_ms: int = Field(default=DEFAULT_ACTIVITY_END_MS, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def check_ranges(self) -> "MobilityConfig":
        """Ranges must be ordered, speeds positive, pauses non-negative."""
        for name in ("replica_speed", "relay_speed"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                msg = f"{name} must satisfy 0 < low <= high, got {(low, high)}"
                raise ValueError(msg)
        for name in ("replica_pause_s", "relay_pause_s"):
            low, high = getattr(self, name)
            if not 0 <= low <= high:
                msg = f"{name} must satisfy 0 <= low <= high, got {(low, high)}"
                raise ValueError(msg)
        if self.activity_end_ms < self.activity_start_ms:
            msg = "activity_end_ms must not precede activity_start_ms"
            raise ValueError(msg)
        return self
