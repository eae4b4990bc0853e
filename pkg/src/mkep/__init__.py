"""Multi-registry kidney exchange: clearing with per-registry individual
rationality, and a round-by-round simulator comparing merged and separate pools."""

from .config import ExperimentConfig, parse_config
from .domain import BloodGroup, CompatibilityGraph, ContractError, ExchangeCycle, HlaProfile, Pair, Registry, Solution
from .graph import build_graph
from .scoring import edge_weight, match_score
from .simulator import World, run_experiment, run_replication
from .solver import SolveSpec, brute_force, enumerate_cycles, solve, verify_compact

__all__ = [
    "BloodGroup",
    "CompatibilityGraph",
    "ContractError",
    "ExchangeCycle",
    "ExperimentConfig",
    "HlaProfile",
    "Pair",
    "Registry",
    "Solution",
    "SolveSpec",
    "World",
    "brute_force",
    "build_graph",
    "edge_weight",
    "enumerate_cycles",
    "match_score",
    "parse_config",
    "run_experiment",
    "run_replication",
    "solve",
    "verify_compact",
]
