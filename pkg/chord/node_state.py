"""
State of a single Chord node and the peer mode machine.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from .messages import MessageEnvelope


class PeerMode(str, Enum):
    NOT_CONNECTED = "not_connected"
    CONNECTED = "connected"
    LEAVING = "leaving"


ALLOWED_TRANSITIONS = frozenset({
    (PeerMode.NOT_CONNECTED, PeerMode.CONNECTED),
    (PeerMode.CONNECTED, PeerMode.LEAVING),
    (PeerMode.LEAVING, PeerMode.NOT_CONNECTED),
    (PeerMode.CONNECTED, PeerMode.NOT_CONNECTED),
})

# Purposes of outstanding requests
STABILIZE = "stabilize"
FINGER = "finger"
PUT = "put"
GET = "get"


@dataclass(frozen=True, slots=True)
class PendingRequest:
    """A request a node has sent and whose reply it is waiting for."""
    purpose: str
    target: int
    issued_at: int
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass(slots=True)
class NodeState:
    """
    The node tuple <id, successor, predecessor, finger, next, keyvalue> plus
    the inbox and the bookkeeping for outstanding requests.

    finger[i - 1] holds entry i, which targets id + 2^(i-1).
    keyvalue maps hash(key) to its value, so there is one pair per key id.
    """
    id: int
    successor: int
    predecessor: Optional[int]
    finger: List[int]
    next: int = 1
    keyvalue: Dict[int, str] = field(default_factory=dict)
    inbox: List[MessageEnvelope] = field(default_factory=list)
    pending: Dict[int, PendingRequest] = field(default_factory=dict)
    next_corr: int = 0

    def clone(self) -> "NodeState":
        return NodeState(
            id=self.id,
            successor=self.successor,
            predecessor=self.predecessor,
            finger=list(self.finger),
            next=self.next,
            keyvalue=dict(self.keyvalue),
            inbox=list(self.inbox),
            pending=dict(self.pending),
            next_corr=self.next_corr,
        )

    def set_successor(self, successor: int) -> None:
        # The first finger is the successor
        self.successor = successor
        if self.finger:
            self.finger[0] = successor

    def new_corr(self) -> int:
        corr = self.next_corr
        self.next_corr += 1
        return corr

    def pending_for(self, purpose: str) -> Optional[int]:
        for corr, request in self.pending.items():
            if request.purpose == purpose:
                return corr
        return None

    def key_ids(self) -> List[int]:
        return sorted(self.keyvalue)


def validate_node(state: NodeState, m_bits: int) -> List[str]:
    """
    Check the structural invariants of a node.

    Args:
        state: Node to check
        m_bits: Number of identifier bits

    Returns:
        A list of problems, empty when the node is well formed
    """
    problems = []
    n_slots = 2 ** m_bits
    if len(state.finger) != m_bits:
        problems.append(f"node {state.id}: finger table has {len(state.finger)} entries, expected {m_bits}")
    if not 1 <= state.next <= m_bits:
        problems.append(f"node {state.id}: next={state.next} outside [1, {m_bits}]")
    if state.finger and state.finger[0] != state.successor:
        problems.append(f"node {state.id}: finger[1]={state.finger[0]} differs from successor {state.successor}")
    for ident in [state.id, state.successor, *state.finger, *state.keyvalue]:
        if not 0 <= ident < n_slots:
            problems.append(f"node {state.id}: identifier {ident} outside the ring")
    return problems
