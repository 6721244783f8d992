"""PermitBFT: node state machine, block graph, UTXO ledger and a deterministic simulator."""

from .core import creator_of, max_faulty, quorum
from .dag import BlockDag
from .ledger import ledger_view, linearize
from .node import Node, TimerConfig
from .scenario import Scenario, load_scenario
from .simnet import run

__version__ = "0.1.0"

__all__ = [
    "BlockDag", "Node", "Scenario", "TimerConfig", "creator_of", "ledger_view", "linearize",
    "load_scenario", "max_faulty", "quorum", "run",
]
