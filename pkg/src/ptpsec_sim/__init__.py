"""Discrete-event simulator for PTP and PTPsec under time delay attacks."""

from ptpsec_sim.adversary import AttackerState, AttackProfile, AttackSpec
from ptpsec_sim.detection import consensus_asymmetry, detect
from ptpsec_sim.protocol import (
    compute_offset,
    messages_per_cycle,
    rectified_offset,
    rtt_measurements,
)
from ptpsec_sim.runner import run_scenario
from ptpsec_sim.scenario import load_scenario, parse_scenario
from ptpsec_sim.topology import build_graph, find_edge_disjoint_paths

__all__ = [
    "AttackProfile",
    "AttackSpec",
    "AttackerState",
    "build_graph",
    "compute_offset",
    "consensus_asymmetry",
    "detect",
    "find_edge_disjoint_paths",
    "load_scenario",
    "messages_per_cycle",
    "parse_scenario",
    "rectified_offset",
    "rtt_measurements",
    "run_scenario",
]

__version__ = "0.1.0"
