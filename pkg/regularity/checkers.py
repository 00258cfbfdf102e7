"""
Correctness checks run over world snapshots: key placement, get soundness,
stranded nodes, finger fixpoint, node invariants and convergence.
"""

import logging
from typing import TYPE_CHECKING, List, Optional

from chord.exceptions import InvariantBroken
from chord.messages import KEY_CARRYING, MEMBERSHIP
from chord.node_state import ALLOWED_TRANSITIONS, PeerMode, validate_node
from chord.ring_math import member_of, ring_add
from .reports import ViolationKind, ViolationReport
from .stability import is_stable_network, responsible_node

if TYPE_CHECKING:
    from simulator.world import World

logger = logging.getLogger("chordsim.regularity")


def _digest(world: "World", *node_ids: Optional[int]) -> str:
    rows = []
    for node_id in node_ids:
        node = world.nodes.get(node_id) if node_id is not None else None
        if node is None:
            continue
        pred = "undef" if node.predecessor is None else node.predecessor
        rows.append(f"{node.id}:pred={pred},succ={node.successor},keys={node.key_ids()}")
    return ";".join(rows)


def check_golden_rule(world: "World") -> List[ViolationReport]:
    """
    Every stored pair <h, v> at node n must satisfy member_of(h, predecessor(n), n).
    A node without predecessor is reported as indeterminate when it holds keys.
    """
    reports = []
    for node_id in sorted(world.nodes):
        node = world.nodes[node_id]
        for h in node.key_ids():
            if node.predecessor is None:
                detail = "holder has no predecessor, placement indeterminate"
            elif not member_of(h, node.predecessor, node_id):
                detail = f"key outside ({node.predecessor},{node_id}]"
            else:
                continue
            reports.append(ViolationReport(kind=ViolationKind.GOLDEN_RULE, step=world.clock, node=node_id,
                                           key=h, detail=detail, state_digest=_digest(world, node_id)))
    return reports


def check_get_soundness(world: "World", h: int, answer: Optional[str],
                        origin: Optional[int] = None) -> Optional[ViolationReport]:
    """
    An undef answer is sound only if no node stores a pair for h.

    Args:
        world: Snapshot at the time the answer arrived
        h: Key id the get asked for
        answer: The value returned, None for undef
        origin: Node that issued the get

    Returns:
        None when sound, a GetUnsound report naming the holder otherwise
    """
    if answer is not None:
        return None
    for node_id in sorted(world.nodes):
        if h in world.nodes[node_id].keyvalue:
            return ViolationReport(kind=ViolationKind.GET_UNSOUND, step=world.clock, node=node_id, key=h,
                                   detail=f"get from {origin} answered undef but node {node_id} holds the key",
                                   state_digest=_digest(world, node_id))
    return None


def check_stranded(world: "World") -> List[ViolationReport]:
    """
    A node is stranded when another active node exists, its successor is
    unreachable or itself, and no other active node points at it.
    """
    reports = []
    if len(world.nodes) < 2:
        return reports
    for node_id in sorted(world.nodes):
        node = world.nodes[node_id]
        if node.successor in world.nodes and node.successor != node_id:
            continue
        pointed_at = any(
            other.successor == node_id or other.predecessor == node_id
            for other_id, other in world.nodes.items()
            if other_id != node_id
        )
        if not pointed_at:
            reports.append(ViolationReport(kind=ViolationKind.STRANDED, step=world.clock, node=node_id,
                                           detail=f"successor {node.successor} unreachable and no inbound pointers",
                                           state_digest=_digest(world, node_id)))
    return reports


def check_fingers_fixpoint(world: "World") -> List[ViolationReport]:
    """Every finger entry i of node n must be the ring-order successor of n + 2^(i-1)."""
    reports = []
    active = world.active_ids()
    n_slots = world.config.n_slots
    for node_id in active:
        node = world.nodes[node_id]
        for index, entry in enumerate(node.finger, start=1):
            expected = responsible_node(active, ring_add(node_id, 2 ** (index - 1), n_slots))
            if entry != expected:
                reports.append(ViolationReport(kind=ViolationKind.FINGER_STALE, step=world.clock, node=node_id,
                                               detail=f"finger[{index}]={entry}, expected {expected}"))
    return reports


def check_node_invariants(world: "World") -> None:
    """
    Structural invariants checked after every step.

    Raises:
        InvariantBroken: If a node is malformed, the nodes and connected peers disagree,
            or a peer changed mode along a forbidden edge during this step
    """
    problems = []
    for node in world.nodes.values():
        problems.extend(validate_node(node, world.m_bits))
    connected = {r.node_id for r in world.peers.values() if r.mode == PeerMode.CONNECTED}
    if connected != set(world.nodes):
        problems.append(f"connected peers {sorted(connected)} differ from nodes {world.active_ids()}")
    for clock, peer, old, new in reversed(world.mode_history):
        if clock != world.clock:
            break
        if (old, new) not in ALLOWED_TRANSITIONS:
            problems.append(f"peer {peer} went from {old.value} to {new.value}")
    if problems:
        raise InvariantBroken("; ".join(problems))


def traffic_in_flight(world: "World") -> int:
    """Envelopes on the bus that move keys or change membership."""
    return sum(1 for envelope in world.bus if envelope.kind in KEY_CARRYING or envelope.kind in MEMBERSHIP)


def is_converged(world: "World") -> bool:
    """
    Quiescence target: stable network, fingers at fixpoint, nothing deferred
    or joining, no key or membership traffic and no client request pending.
    """
    if world.deferred or world.joining:
        return False
    if traffic_in_flight(world) or world.outstanding_client_requests():
        return False
    if not is_stable_network(world).stable:
        return False
    return not check_fingers_fixpoint(world)
