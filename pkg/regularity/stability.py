"""
Stable pairs, stable networks and the regular-run gate.

A pair <x1, x2> of active nodes is stable when the active nodes y0 = x1, ...,
yr = x2 taken clockwise satisfy successor(yi) = yi+1 and predecessor(yi+1) = yi,
and nobody is still on its way into the interval.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

from chord.messages import KEY_CARRYING, MEMBERSHIP, MessageKind
from chord.node_state import PUT
from chord.ring_math import member_of, ring_distance
from .reports import StabilityReport

if TYPE_CHECKING:
    from simulator.events import ScenarioEvent
    from simulator.world import World

logger = logging.getLogger("chordsim.regularity")


def ring_walk(world: "World", x1: int, x2: int) -> List[int]:
    """
    Active nodes from x1 to x2 in clockwise order, both ends included.
    When x1 == x2 the walk goes once around the ring and ends at x1 again.
    """
    n_slots = world.config.n_slots
    ordered = sorted(world.nodes, key=lambda node_id: ring_distance(x1, node_id, n_slots))
    if x1 == x2:
        return ordered + [x1]
    end = ring_distance(x1, x2, n_slots)
    return [node_id for node_id in ordered if ring_distance(x1, node_id, n_slots) <= end]


def is_stable_pair(world: "World", x1: int, x2: int) -> StabilityReport:
    """
    Check whether <x1, x2> is a stable pair.

    Args:
        world: World snapshot
        x1: Start of the pair
        x2: End of the pair

    Returns:
        A StabilityReport with the first broken link as witness
    """
    if x1 not in world.nodes or x2 not in world.nodes:
        return StabilityReport(pair=(x1, x2), stable=False, witness=f"<{x1},{x2}> are not both active")

    chain = ring_walk(world, x1, x2)
    for i, (y, y_next) in enumerate(zip(chain, chain[1:])):
        if world.nodes[y].successor != y_next:
            return StabilityReport(pair=(x1, x2), stable=False, chain=tuple(chain), witness_index=i,
                                   witness=f"successor({y})={world.nodes[y].successor}, expected {y_next}")
        if world.nodes[y_next].predecessor != y:
            pred = world.nodes[y_next].predecessor
            return StabilityReport(pair=(x1, x2), stable=False, chain=tuple(chain), witness_index=i,
                                   witness=f"predecessor({y_next})={'undef' if pred is None else pred}, expected {y}")

    for joiner in sorted(world.joining):
        if x1 == x2 or (member_of(joiner, x1, x2) and joiner != x2):
            return StabilityReport(pair=(x1, x2), stable=False, chain=tuple(chain),
                                   witness=f"node {joiner} is joining inside the interval")

    interior = set(chain[1:-1])
    for z in sorted(world.nodes):
        if z not in chain and world.nodes[z].successor in interior:
            return StabilityReport(pair=(x1, x2), stable=False, chain=tuple(chain),
                                   witness=f"node {z} outside the chain points at {world.nodes[z].successor}")

    return StabilityReport(pair=(x1, x2), stable=True, chain=tuple(chain))


def is_stable_network(world: "World") -> StabilityReport:
    """The network is stable when <x0, x0> is stable for the smallest active id x0."""
    if not world.nodes:
        if world.joining:
            return StabilityReport(stable=False, witness="only joining nodes, no active node")
        return StabilityReport(stable=True)
    x0 = min(world.nodes)
    return is_stable_pair(world, x0, x0)


def responsible_node(active: List[int], h: int) -> Optional[int]:
    """Ring-order oracle: the first active id at or after h, wrapping past zero."""
    if not active:
        return None
    ordered = sorted(active)
    for node_id in ordered:
        if node_id >= h:
            return node_id
    return ordered[0]


def neighbors(active: List[int], node_id: int) -> Tuple[int, int]:
    """Previous and next active ids around node_id (node_id itself when it is alone)."""
    ordered = sorted(active)
    index = ordered.index(node_id)
    return ordered[index - 1], ordered[(index + 1) % len(ordered)]


@dataclass(frozen=True)
class GateDecision:
    allowed: bool
    pair: Tuple[int, int]
    witness: Optional[str] = None


def preceding_node(active: List[int], position: int) -> int:
    """The last active id strictly before position, wrapping past zero."""
    ordered = sorted(active)
    earlier = [node_id for node_id in ordered if node_id < position]
    return earlier[-1] if earlier else ordered[-1]


def gate_pair(world: "World", event: "ScenarioEvent", position: int) -> Tuple[int, int]:
    """
    The tightest pair enclosing the ring position an event touches: for a put
    or a join, the position's responsible node and the active node before it;
    for a leave, the active nodes on either side of the leaver.
    """
    from simulator.events import Action

    active = world.active_ids()
    if event.action in (Action.PUT, Action.JOIN):
        return preceding_node(active, position), responsible_node(active, position)
    before, after = neighbors(active, position)
    return before, after


def keys_in_flight(world: "World") -> List[int]:
    """Key ids of puts still being routed or stored and of pairs being transferred."""
    pending = [
        request.target
        for node in world.nodes.values()
        for request in node.pending.values()
        if request.purpose == PUT
    ]
    for envelope in world.bus:
        if envelope.kind == MessageKind.STORE_KEY:
            pending.append(envelope.payload["h"])
        elif envelope.kind == MessageKind.TRANSFER_KEYS:
            pending.extend(h for h, _ in envelope.payload["pairs"])
    return sorted(pending)


def misrouting_node(world: "World", h: int) -> Optional[int]:
    """A node that would answer a lookup of h with anything but its responsible node."""
    responsible = responsible_node(world.active_ids(), h)
    for node_id in sorted(world.nodes):
        successor = world.nodes[node_id].successor
        if member_of(h, node_id, successor) and successor != responsible:
            return node_id
    return None


def gate(world: "World", event: "ScenarioEvent", position: int) -> GateDecision:
    """
    Regular-run gate: joins, leaves and puts fire only between stable pairs.
    Joins and leaves also wait for the whole network to settle.

    A put takes several steps to reach its node, so the pair must stay stable
    until it lands: joins and leaves wait while a key is in flight inside their
    interval, and a put waits until every node would route it correctly and
    no earlier pair for the same key id is still moving.

    Args:
        world: World snapshot
        event: The join, leave or put to check
        position: Key id for a put, the joining or leaving node's id otherwise

    Returns:
        allow, or defer with the offending pair and the witness
    """
    from simulator.events import GATED_ACTIONS, Action

    if not world.nodes or event.action not in GATED_ACTIONS:
        return GateDecision(True, (position, position))

    pair = gate_pair(world, event, position)
    for h in keys_in_flight(world):
        if event.action == Action.PUT and h == position:
            return GateDecision(False, pair, f"an earlier pair for key {h} is still on its way")
        if event.action != Action.PUT and member_of(h, *pair):
            return GateDecision(False, pair, f"key {h} is still on its way inside <{pair[0]},{pair[1]}>")
    report = is_stable_pair(world, *pair)
    if not report.stable:
        return GateDecision(False, pair, report.witness)
    if event.action != Action.PUT:
        # Membership changes go one at a time
        report = is_stable_network(world)
        if not report.stable:
            return GateDecision(False, pair, f"network not stable yet: {report.witness}")
    if event.action == Action.JOIN:
        return GateDecision(True, pair)

    if event.action == Action.PUT:
        node_id = misrouting_node(world, position)
        if node_id is not None:
            return GateDecision(False, pair, f"node {node_id} would route {position} "
                                             f"to {world.nodes[node_id].successor}")
        return GateDecision(True, pair)

    for envelope in world.bus:
        if envelope.kind in KEY_CARRYING and envelope.receiver == position:
            return GateDecision(False, pair, f"{envelope.summary()} still in flight to the leaver")
        if envelope.kind in MEMBERSHIP:
            return GateDecision(False, pair, f"{envelope.summary()} still in flight")
    return GateDecision(True, pair)
