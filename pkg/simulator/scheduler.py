"""
The step scheduler: one pass of every node's periodic loop followed by the
externally chosen actions, plus the external functions the rules may call.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from chord.exceptions import (
    GateViolation,
    JoinFailed,
    KeySpaceFull,
    LookupTimeout,
    NotConverged,
    PreconditionViolation,
)
from chord.messages import KEY_CARRYING, MessageEnvelope, MessageKind
from chord.node_rules import (
    PERIODIC_RULES,
    Observation,
    RuleContext,
    RuleResult,
    answer_get,
    complete_join,
    route_step,
    rule_fair_leave,
    rule_get,
    rule_join,
    rule_put,
    rule_start,
)
from chord.node_state import PeerMode
from chord.ring_math import KEY, PEER, RingConfig, assign_hash, draw_free_id
from regularity.checkers import check_node_invariants, is_converged
from regularity.stability import gate
from .events import Action, ScenarioEvent
from .world import PeerRecord, PendingJoin, RunMode, World

logger = logging.getLogger("chordsim.simulator")

# Default convergence budget is this many rounds per active node and ring bit
CONVERGENCE_FACTOR = 8

# A joiner re-sends its successor lookup this many times before giving up
JOIN_ATTEMPTS = 3


@dataclass
class StepOutcome:
    """What happened during one step."""
    step: int
    fired: List[Tuple[int, str]] = field(default_factory=list)
    delivered: List[str] = field(default_factory=list)
    external_choices: List[str] = field(default_factory=list)
    deferred: List[str] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    observations: List[Observation] = field(default_factory=list)


@dataclass
class QuiesceResult:
    converged: bool
    rounds: int
    outcomes: List[StepOutcome] = field(default_factory=list)


def new_world(config: RingConfig, mode: RunMode = RunMode.REGULAR, seed: int = 0,
              hop_budget_factor: int = 4) -> World:
    """Create an empty world."""
    return World(config=config, mode_flag=RunMode(mode), seed=seed, hop_budget_factor=hop_budget_factor)


# ---------------------------------------------------------------------------
# External functions
# ---------------------------------------------------------------------------

def ping(world: World, target: Optional[int]) -> bool:
    """True iff target is the id of a currently connected node."""
    return target is not None and target in world.nodes


def known_nodes(world: World, asker: str, via: Optional[int] = None) -> Optional[int]:
    """
    Contact for a joining peer.

    Args:
        world: Current world
        asker: Name of the joining peer
        via: Contact named by the scenario, if any

    Returns:
        The contact id, or None when the network is empty
    """
    if not world.nodes:
        return None
    if via is not None:
        return via
    contact = world.rng.choice(world.active_ids())
    logger.debug(f"known_nodes picked contact {contact} for {asker}")
    return contact


def rule_context(world: World) -> RuleContext:
    return RuleContext(
        m_bits=world.m_bits,
        clock=world.clock,
        ping=lambda target: ping(world, target),
        hop_budget=world.hop_budget,
    )


# ---------------------------------------------------------------------------
# Firing rules
# ---------------------------------------------------------------------------

def install(world: World, node_id: int, result: RuleResult, outcome: Optional[StepOutcome] = None) -> bool:
    """
    Commit a rule result: the new state replaces the node's, the outbox goes on
    the bus and the observations are recorded.

    Returns:
        True if the rule had any effect
    """
    before = world.nodes.get(node_id)
    effective = bool(result.outbox or result.observations or before != result.state)
    world.nodes[node_id] = result.state
    world.bus.extend(result.outbox)
    world.stats.messages_sent += len(result.outbox)

    for observation in result.observations:
        world.observations.append((world.clock, observation))
        if outcome is not None:
            outcome.observations.append(observation)
        if observation.kind == "lookup_resolved":
            _count_lookup(world, observation.data["hops"])
        elif observation.kind == "lookup_timeout":
            world.stats.lookups += 1
            world.stats.lookup_timeouts += 1
        elif observation.kind == "malformed":
            world.stats.malformed += 1
        elif observation.kind in ("put_failed", "successor_repaired"):
            logger.info(f"Node {observation.node}: {observation.kind} {observation.data}")
    return effective


def _count_lookup(world: World, hops: int) -> None:
    world.stats.lookups += 1
    world.stats.hops_total += hops
    world.stats.hops_max = max(world.stats.hops_max, hops)


def fire_rule(world: World, node_id: int, rule_name: str, outcome: Optional[StepOutcome] = None) -> bool:
    """
    Fire one periodic rule at one node.

    Args:
        world: World to update in place
        node_id: Active node to fire at
        rule_name: Key of PERIODIC_RULES
        outcome: Step outcome to record into

    Returns:
        True if the rule had any effect
    """
    if node_id not in world.nodes:
        raise PreconditionViolation(f"Node {node_id} is not active")
    rule = PERIODIC_RULES[rule_name]
    result = rule(world.nodes[node_id], rule_context(world))
    effective = install(world, node_id, result, outcome)
    if effective and outcome is not None:
        outcome.fired.append((node_id, rule_name))
    return effective


def _run_periodic(world: World, node_id: int, outcome: StepOutcome) -> None:
    for rule_name in PERIODIC_RULES:
        fire_rule(world, node_id, rule_name, outcome)


def _flush_bus(world: World, outcome: StepOutcome) -> None:
    # Everything sent last step arrives now, in queue order
    bus, world.bus = world.bus, []
    for envelope in bus:
        if envelope.receiver in world.nodes:
            world.nodes[envelope.receiver].inbox.append(envelope)
        elif envelope.receiver in world.joining:
            world.joining[envelope.receiver].inbox.append(envelope)
        else:
            world.stats.messages_dropped += 1
            logger.debug(f"Dropped {envelope.summary()}: receiver is gone")
            if envelope.kind in KEY_CARRYING:
                _lose_keys(world, envelope.receiver, _carried_pairs(envelope))
            continue
        world.stats.messages_delivered += 1
        outcome.delivered.append(envelope.summary())


def _advance_joiner(world: World, join: PendingJoin, outcome: StepOutcome) -> None:
    response = None
    leftovers = []
    for envelope in join.inbox:
        if envelope.kind == MessageKind.FIND_SUCC_RESP and envelope.corr == 0 and response is None:
            response = envelope
        else:
            leftovers.append(envelope)
    join.inbox = []

    ctx = rule_context(world)
    successor = response.payload.get("result") if response is not None else None
    if successor is not None and ping(world, successor):
        _count_lookup(world, response.payload.get("hops", 0))
        del world.joining[join.node_id]
        node = complete_join(join.node_id, successor, world.m_bits)
        node.inbox.extend(leftovers)
        world.nodes[join.node_id] = node
        world.peers[join.peer].node_id = join.node_id
        world.set_mode(join.peer, PeerMode.CONNECTED)
        world.stats.joins += 1
        outcome.fired.append((join.node_id, "Join"))
        logger.info(f"Peer {join.peer} joined as node {join.node_id} with successor {node.successor}")
        _run_periodic(world, join.node_id, outcome)
        return

    world.stats.messages_dropped += len(leftovers)
    if response is None and world.clock < join.issued_at + ctx.lookup_deadline:
        return
    if response is None:
        reason = "successor lookup timed out"
    elif successor is None:
        reason = "successor lookup failed"
    else:
        reason = f"successor {successor} is gone"
    if join.attempts >= JOIN_ATTEMPTS:
        _fail_join(world, join, outcome, reason)
        return
    _retry_join(world, join, outcome, reason)


def _retry_join(world: World, join: PendingJoin, outcome: StepOutcome, reason: str) -> None:
    contact = join.contact if ping(world, join.contact) else known_nodes(world, join.peer)
    if contact is None:
        _fail_join(world, join, outcome, f"{reason}, no contact left")
        return
    join.contact = contact
    join.issued_at = world.clock
    join.attempts += 1
    world.bus.append(rule_join(join.node_id, contact, rule_context(world)))
    world.stats.messages_sent += 1
    logger.info(f"Peer {join.peer} retries its join through node {contact}: {reason}")


def _fail_join(world: World, join: PendingJoin, outcome: StepOutcome, reason: str) -> None:
    world.joining.pop(join.node_id, None)
    world.hash_assignment.release(join.peer, PEER)
    world.peers[join.peer].node_id = None
    world.stats.join_failures += 1
    message = f"JoinFailed {join.peer} id={join.node_id}: {reason}"
    outcome.failures.append(message)
    logger.info(message)


# ---------------------------------------------------------------------------
# Chosen actions
# ---------------------------------------------------------------------------

def apply_event(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome] = None) -> None:
    """
    Apply one externally chosen action.

    Raises:
        GateViolation: Regular mode refused a join, leave or put; the caller defers it
        JoinFailed: The join cannot even be sent
        KeySpaceFull: No key identifier is free
        PreconditionViolation: The action is not enabled in this state
        ExplicitIdOccupied: The scenario asked for an identifier in use
    """
    handler = _EVENT_HANDLERS.get(event.action)
    if handler is None:
        raise PreconditionViolation(f"{event.action.value} is not a protocol action")
    handler(world, event, outcome)
    if outcome is not None:
        outcome.external_choices.append(event.label())


def _require_node(world: World, event: ScenarioEvent) -> int:
    node_id = event.node
    if node_id is None or node_id not in world.nodes:
        raise PreconditionViolation(f"{event.label()}: node {event.subject} is not active")
    return node_id


def _require_idle_peer(world: World, peer: str) -> PeerRecord:
    record = world.peers.setdefault(peer, PeerRecord(peer))
    if record.mode != PeerMode.NOT_CONNECTED or record.node_id is not None:
        raise PreconditionViolation(f"Peer {peer} is already {record.mode.value}")
    return record


def _apply_start(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome]) -> None:
    peer = str(event.subject)
    if world.nodes or world.joining:
        raise PreconditionViolation(f"Peer {peer} cannot start: the network already exists")
    _require_idle_peer(world, peer)
    _start_peer(world, peer, event.params.get("id"))


def _start_peer(world: World, peer: str, explicit: Optional[int]) -> None:
    node_id = assign_hash(world.hash_assignment, peer, PEER, explicit, world.rng)
    if node_id is None:
        raise JoinFailed(f"No free identifier for {peer}")
    world.nodes[node_id] = rule_start(node_id, world.m_bits)
    world.peers[peer].node_id = node_id
    world.set_mode(peer, PeerMode.CONNECTED)
    logger.info(f"Peer {peer} started the network as node {node_id}")


def _apply_join(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome]) -> None:
    peer = str(event.subject)
    _require_idle_peer(world, peer)
    contact = known_nodes(world, peer, event.params.get("via"))
    if contact is None:
        logger.info(f"No known nodes for {peer}, starting a new network")
        _start_peer(world, peer, event.params.get("id"))
        return

    node_id = assign_hash(world.hash_assignment, peer, PEER, event.params.get("id"), world.rng)
    if node_id is None:
        raise JoinFailed(f"No free identifier for {peer}: the ring is full")
    try:
        _check_gate(world, event, node_id)
    except GateViolation:
        world.hash_assignment.release(peer, PEER)
        raise
    try:
        envelope = rule_join(node_id, contact, rule_context(world))
    except JoinFailed:
        world.hash_assignment.release(peer, PEER)
        world.stats.join_failures += 1
        raise

    world.joining[node_id] = PendingJoin(peer, node_id, contact, world.clock)
    world.peers[peer].node_id = node_id
    world.bus.append(envelope)
    world.stats.messages_sent += 1
    logger.info(f"Peer {peer} asks node {contact} to join as {node_id}")


def _check_gate(world: World, event: ScenarioEvent, position: int) -> None:
    decision = gate(world, event, position)
    if decision.allowed:
        return
    if world.mode_flag == RunMode.REGULAR:
        raise GateViolation(event.label(), decision.pair, decision.witness)
    # Unrestricted runs let the event through; the breach is only recorded
    world.observations.append((world.clock, Observation(
        "gate_breach", position, {"event": event.label(), "pair": decision.pair, "witness": decision.witness})))


def _remove_node(world: World, node_id: int) -> None:
    peer = world.peer_of(node_id)
    del world.nodes[node_id]
    world.hash_assignment.release(peer, PEER)
    world.peers[peer].node_id = None


def _apply_fair_leave(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome]) -> None:
    node_id = _require_node(world, event)
    _check_gate(world, event, node_id)
    node = world.nodes[node_id]
    outbox = rule_fair_leave(node)
    peer = world.peer_of(node_id)
    world.set_mode(peer, PeerMode.LEAVING)
    _remove_node(world, node_id)
    world.set_mode(peer, PeerMode.NOT_CONNECTED)
    world.bus.extend(outbox)
    world.stats.messages_sent += len(outbox)
    if node.successor == node_id and node.keyvalue:
        _lose_keys(world, node_id, node.keyvalue)
    logger.info(f"Node {node_id} left fairly, handing {len(node.keyvalue)} pairs to {node.successor}")


def _apply_unfair_leave(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome]) -> None:
    node_id = _require_node(world, event)
    _check_gate(world, event, node_id)
    node = world.nodes[node_id]
    peer = world.peer_of(node_id)
    _remove_node(world, node_id)
    world.set_mode(peer, PeerMode.NOT_CONNECTED)
    _lose_keys(world, node_id, node.keyvalue)
    logger.info(f"Node {node_id} crashed, losing {len(node.keyvalue)} pairs")


def _lose_keys(world: World, node_id: int, keyvalue: dict) -> None:
    world.stats.keys_lost += len(keyvalue)
    world.observations.append((world.clock, Observation("keys_lost", node_id, {"keys": sorted(keyvalue)})))
    for h in keyvalue:
        name = world.hash_assignment.owner_of(h, KEY)
        if name is not None:
            world.hash_assignment.release(name, KEY)


def _carried_pairs(envelope: MessageEnvelope) -> dict:
    if envelope.kind == MessageKind.STORE_KEY:
        return {envelope.payload["h"]: envelope.payload["value"]}
    return {h: value for h, value in envelope.payload["pairs"]}


def _key_id(world: World, event: ScenarioEvent, allocate: bool) -> int:
    key = str(event.params["key"])
    explicit = event.params.get("hash")
    h = world.hash_assignment.lookup(key, KEY)
    if h is not None and (explicit is None or explicit == h):
        return h
    if not allocate:
        # Asking for a key nobody stored: any identifier will do, nothing is reserved
        return explicit if explicit is not None else world.rng.randrange(world.config.n_slots)
    h = assign_hash(world.hash_assignment, key, KEY, explicit, world.rng)
    if h is None:
        raise KeySpaceFull(f"No free key identifier for {key}")
    return h


def _apply_put(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome]) -> None:
    node_id = _require_node(world, event)
    key = str(event.params["key"])
    position = event.params.get("hash")
    if position is None:
        position = world.hash_assignment.lookup(key, KEY)
    if position is None:
        position = _peek_free_key(world)
    _check_gate(world, event, position)
    h = _key_id(world, event, allocate=True)
    result = rule_put(world.nodes[node_id], key, h, str(event.params.get("value", "")), rule_context(world))
    install(world, node_id, result, outcome)


def _peek_free_key(world: World) -> int:
    # Where a random key id would land, without consuming the generator
    saved = world.rng.getstate()
    h = draw_free_id(set(world.hash_assignment.key_to_id.values()), world.config.n_slots, world.rng)
    world.rng.setstate(saved)
    if h is None:
        raise KeySpaceFull("No free key identifier left")
    return h


def _apply_get(world: World, event: ScenarioEvent, outcome: Optional[StepOutcome]) -> None:
    node_id = _require_node(world, event)
    key = str(event.params["key"])
    h = _key_id(world, event, allocate=False)
    result = rule_get(world.nodes[node_id], key, h, rule_context(world))
    install(world, node_id, result, outcome)


_EVENT_HANDLERS = {
    Action.START: _apply_start,
    Action.JOIN: _apply_join,
    Action.FAIR_LEAVE: _apply_fair_leave,
    Action.UNFAIR_LEAVE: _apply_unfair_leave,
    Action.PUT: _apply_put,
    Action.GET: _apply_get,
}


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def step(world: World, injected: Optional[List[ScenarioEvent]] = None) -> Tuple[World, StepOutcome]:
    """
    Advance the world by one step.

    Messages sent during the previous step are delivered first. Then every
    node (and pending joiner) runs its loop body in ascending id order:
    ReadMessages, Stabilize, UpdatePredecessor, UpdateFingers. Finally deferred
    events are retried and the injected events are applied; a gated event that
    is refused is deferred to the next step.

    Args:
        world: World to advance in place
        injected: Events chosen for this step

    Returns:
        The world and the step outcome
    """
    outcome = StepOutcome(step=world.clock)
    _flush_bus(world, outcome)

    for node_id in sorted(set(world.nodes) | set(world.joining)):
        if node_id in world.joining:
            _advance_joiner(world, world.joining[node_id], outcome)
        elif node_id in world.nodes:
            _run_periodic(world, node_id, outcome)

    queue, world.deferred = world.deferred, []
    for event in queue + list(injected or []):
        try:
            apply_event(world, event, outcome)
        except GateViolation as e:
            world.deferred.append(event)
            world.stats.deferrals += 1
            outcome.deferred.append(str(e))
            logger.info(str(e))
        except (JoinFailed, KeySpaceFull, PreconditionViolation) as e:
            outcome.failures.append(f"{type(e).__name__} {event.label()}: {e}")
            logger.warning(f"{event.label()} failed: {e}")

    check_node_invariants(world)
    world.clock += 1
    return world, outcome


def convergence_budget(world: World, factor: int = CONVERGENCE_FACTOR) -> int:
    return factor * max(1, len(world.nodes) + len(world.joining)) * world.m_bits


def quiesce(world: World, max_rounds: Optional[int] = None,
            on_step: Optional[Callable[[StepOutcome], None]] = None,
            factor: int = CONVERGENCE_FACTOR) -> QuiesceResult:
    """
    Step without injections until the network converges.

    Args:
        world: World to advance in place
        max_rounds: Round budget, defaults to factor * nodes * M
        on_step: Called with every step outcome
        factor: Rounds per node and ring bit for the default budget

    Returns:
        The rounds used

    Raises:
        NotConverged: If the budget ran out first
    """
    budget = max_rounds if max_rounds is not None else convergence_budget(world, factor)
    result = QuiesceResult(converged=False, rounds=0)
    while not is_converged(world):
        if result.rounds >= budget:
            logger.warning(f"Quiesce gave up after {result.rounds} rounds at step {world.clock}")
            raise NotConverged(result.rounds)
        _, outcome = step(world)
        result.rounds += 1
        result.outcomes.append(outcome)
        if on_step is not None:
            on_step(outcome)
    result.converged = True
    logger.info(f"Network converged after {result.rounds} rounds at step {world.clock}")
    return result


# ---------------------------------------------------------------------------
# Synchronous resolution (read only)
# ---------------------------------------------------------------------------

def resolve_lookup(world: World, origin: int, h: int) -> Tuple[int, int]:
    """
    Walk find_successor hop by hop without touching the world.

    Returns:
        (resolved node, hops)

    Raises:
        LookupTimeout: If the hop budget runs out or a hop leads to a dead node
    """
    if origin not in world.nodes:
        raise PreconditionViolation(f"Node {origin} is not active")
    current, hops = origin, 0
    while True:
        answered, target = route_step(world.nodes[current], h, lambda t: ping(world, t))
        if answered:
            return target, hops
        hops += 1
        if hops > world.hop_budget or target not in world.nodes:
            raise LookupTimeout(f"Lookup of {h} from {origin} stopped after {hops} hops at {target}")
        current = target


def resolve_get(world: World, origin: int, h: int) -> Optional[str]:
    """Get resolution without touching the world: route h, then ask the responsible node."""
    responsible, _ = resolve_lookup(world, origin, h)
    if responsible not in world.nodes:
        return None
    return answer_get(world.nodes[responsible], h)
