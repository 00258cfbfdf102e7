"""
Executable stability definitions and correctness checks for ChordSim runs.
The swap test lives in regularity.linearization.
"""

from .reports import StabilityReport, ViolationKind, ViolationReport
from .stability import is_stable_pair, is_stable_network, gate, GateDecision
from .checkers import (
    check_golden_rule,
    check_get_soundness,
    check_stranded,
    check_fingers_fixpoint,
    check_node_invariants,
    is_converged,
)

__all__ = [
    "StabilityReport",
    "ViolationKind",
    "ViolationReport",
    "is_stable_pair",
    "is_stable_network",
    "gate",
    "GateDecision",
    "check_golden_rule",
    "check_get_soundness",
    "check_stranded",
    "check_fingers_fixpoint",
    "check_node_invariants",
    "is_converged",
]
