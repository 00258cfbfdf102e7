"""
Chord protocol core for ChordSim.
Ring arithmetic, node state and the per-node rules.
"""

from .ring_math import RingConfig, HashAssignment, member_of, ring_add, assign_hash
from .node_state import NodeState, PeerMode
from .messages import MessageKind, MessageEnvelope

__all__ = [
    "RingConfig",
    "HashAssignment",
    "member_of",
    "ring_add",
    "assign_hash",
    "NodeState",
    "PeerMode",
    "MessageKind",
    "MessageEnvelope",
]
