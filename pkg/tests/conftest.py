"""Global test configuration and fixtures."""

import logging
from pathlib import Path

import pytest
from dotenv import load_dotenv

from config import (
    DOT_ENV_FILE,
    Mode,
    Propagation,
    ProtocolConfig,
    Selection,
    SimConfig,
)
from rbss.messages import StateRecord
from rbss.relay import RelayStore
from rbss.versioning import VersionVector
from tracefmt import Role, ScenarioEvent

from .utils import record, store, vv

logger = logging.getLogger(__name__)

# Load environment variables from .env file if it exists.
env_file = Path(DOT_ENV_FILE)
if env_file.exists():
    logger.info("Loading environment variables from .env file")
    load_dotenv(env_file)

# peer vector and store of the selection worked example
SELECTION_PEER = "[a:10,b:5,c:7,d:8,e:4,f:6,g:20,h:3,i:20,j:5,k:6,l:2,m:4,n:1]"
SELECTION_STORE = {
    "S1": "[a:18,b:3,d:14,e:9,f:6]",
    "S2": "[b:5,d:14,e:9,h:3,i:25,j:10]",
    "S3": "[a:9,b:4]",
    "S4": "[c:7,g:25,i:25,l:2]",
    "S5": "[j:10,k:11,m:4]",
    "S6": "[a:5,k:11,n:1]",
    "S7": "[c:6,f:6,g:18]",
    "S8": "[h:3,m:4,n:1]",
}


@pytest.fixture
def protocol() -> ProtocolConfig:
    """Enhanced protocol with immediate propagation and singles-first selection."""
    return ProtocolConfig(
        mode=Mode.ENHANCED,
        propagation=Propagation.IMMEDIATE,
        selection=Selection.SINGLES,
    )


@pytest.fixture
def basic_protocol() -> ProtocolConfig:
    """Single-message transfers with store replacement."""
    return ProtocolConfig(mode=Mode.BASIC)


@pytest.fixture
def selection_peer() -> VersionVector:
    """Vector of the peer in the selection worked example."""
    return vv(SELECTION_PEER)


@pytest.fixture
def selection_records() -> dict[str, StateRecord]:
    """Records of the selection worked example, by name."""
    return {name: record(text) for name, text in SELECTION_STORE.items()}


@pytest.fixture
def relay_store_phi() -> RelayStore:
    """Store of the first relay in the relay-relay worked example."""
    return store("[a:3,b:2]", "[a:1,c:7]", "[c:5,d:12]")


@pytest.fixture
def relay_store_psi() -> RelayStore:
    """Store of the second relay in the relay-relay worked example."""
    return store("[a:2,b:2]", "[b:1,c:9,d:15]")


@pytest.fixture
def sim_config() -> SimConfig:
    """Fast latency and short cool-down with live invariant checks."""
    return SimConfig.model_validate(
        {
            "latency": {"base_ms": 10},
            "cooldown_ms": 60_000,
            "check_invariants": True,
        }
    )


@pytest.fixture
def line_trace() -> list[ScenarioEvent]:
    """r1 and r2 never meet; relay d1 meets r1, leaves, then meets r2."""
    return [
        ScenarioEvent.node_start(0, "d1", Role.RELAY),
        ScenarioEvent.node_start(0, "r1", Role.REPLICA),
        ScenarioEvent.node_start(0, "r2", Role.REPLICA),
        ScenarioEvent.edge(10_000, "d1", "r1", up=True),
        ScenarioEvent.edge(20_000, "d1", "r1", up=False),
        ScenarioEvent.edge(30_000, "d1", "r2", up=True),
        ScenarioEvent.edge(40_000, "d1", "r2", up=False),
        ScenarioEvent.edge(50_000, "d1", "r1", up=True),
        ScenarioEvent.edge(60_000, "d1", "r1", up=False),
    ]


@pytest.fixture
def line_updates() -> list[ScenarioEvent]:
    """One update on each replica before the relay passes by."""
    return [ScenarioEvent.update(1000, "r1"), ScenarioEvent.update(2000, "r2")]
