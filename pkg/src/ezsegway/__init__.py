"""Decentralized, congestion-free network updates with segmentation."""
from .netmodel import Flow, FlowUpdate, Link, NetworkConfig, Topology, diff_update, validate_config
from .segmentation import Segment, segment_flow
from .depgraph import assign_priorities, build_dependency_graph, classify_deadlock, find_critical_ops
from .controller import RunOptions, plan_update, run_centralized, run_decentralized
from .verifier import brute_force_feasible, check_properties

__all__ = [
    "Flow", "FlowUpdate", "Link", "NetworkConfig", "Topology", "diff_update", "validate_config",
    "Segment", "segment_flow", "assign_priorities", "build_dependency_graph", "classify_deadlock",
    "find_critical_ops", "RunOptions", "plan_update", "run_centralized", "run_decentralized",
    "brute_force_feasible", "check_properties",
]
