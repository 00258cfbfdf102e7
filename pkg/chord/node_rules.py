"""
Per-node Chord rules.

Every rule is a pure transition: it takes a NodeState and the external view
(clock, ping) and returns a RuleResult with the new state, the envelopes to put
on the bus and the observations the simulator records. No rule touches another
node's state.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .exceptions import JoinFailed
from .messages import MessageEnvelope, MessageKind
from .node_state import FINGER, GET, PUT, STABILIZE, NodeState, PendingRequest
from .ring_math import member_of, ring_add, ring_distance

logger = logging.getLogger("chordsim.rules")

# Second phase of a get: the responsible node has been found and is being asked for the value
GET_FETCH = "get_fetch"

# Steps a direct request/reply exchange takes with one step of latency each way
DIRECT_ROUND_TRIP = 2


@dataclass(frozen=True)
class RuleContext:
    """What a rule may observe of the world: the clock and the external ping."""
    m_bits: int
    clock: int
    ping: Callable[[int], bool]
    hop_budget: int

    @property
    def n_slots(self) -> int:
        return 2 ** self.m_bits

    @property
    def lookup_deadline(self) -> int:
        return self.hop_budget + DIRECT_ROUND_TRIP


@dataclass(frozen=True)
class Observation:
    """Something a rule reports to the simulator (answers, timeouts, repairs)."""
    kind: str
    node: int
    data: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RuleResult:
    state: NodeState
    outbox: List[MessageEnvelope] = field(default_factory=list)
    observations: List[Observation] = field(default_factory=list)

    def send(self, kind: MessageKind, receiver: int, payload: Optional[Dict[str, Any]] = None,
             corr: Optional[int] = None) -> None:
        self.outbox.append(MessageEnvelope(self.state.id, receiver, kind, payload or {}, corr))

    def observe(self, kind: str, **data: Any) -> None:
        self.observations.append(Observation(kind, self.state.id, data))


# ---------------------------------------------------------------------------
# Membership
# ---------------------------------------------------------------------------

def rule_start(node_id: int, m_bits: int) -> NodeState:
    """
    The first node starts the network: it is its own successor and every finger points at it.
    """
    logger.debug(f"Node {node_id} starts a new ring")
    return NodeState(
        id=node_id,
        successor=node_id,
        predecessor=None,
        finger=[node_id] * m_bits,
        next=1,
    )


def rule_join(joiner_id: int, contact: int, ctx: RuleContext) -> MessageEnvelope:
    """
    Begin a join: ask the contact to find the joiner's successor.

    Args:
        joiner_id: Identifier the hash function gave the joining peer
        contact: Identifier obtained from known_nodes
        ctx: External view

    Returns:
        The FindSuccReq envelope to send

    Raises:
        JoinFailed: If the contact is unreachable
    """
    if not ctx.ping(contact):
        raise JoinFailed(f"Contact {contact} of joining node {joiner_id} is unreachable")
    payload = {"h": joiner_id, "origin": joiner_id, "hops": 1}
    return MessageEnvelope(joiner_id, contact, MessageKind.FIND_SUCC_REQ, payload, corr=0)


def complete_join(joiner_id: int, successor: int, m_bits: int) -> NodeState:
    """
    Build the joined node once its successor is known. The predecessor stays undef
    until some node notifies it.
    """
    return NodeState(
        id=joiner_id,
        successor=successor,
        predecessor=None,
        finger=[successor] * m_bits,
        next=1,
    )


def rule_fair_leave(state: NodeState) -> List[MessageEnvelope]:
    """
    Leave gracefully: hand every pair to the successor and splice the neighbors together.

    Returns:
        Envelopes to send before the node disappears
    """
    outbox = []
    if state.successor == state.id:
        return outbox
    if state.keyvalue:
        pairs = [[h, state.keyvalue[h]] for h in sorted(state.keyvalue)]
        outbox.append(MessageEnvelope(state.id, state.successor, MessageKind.TRANSFER_KEYS, {"pairs": pairs}))
    if state.predecessor is not None and state.predecessor != state.id:
        outbox.append(MessageEnvelope(state.id, state.predecessor, MessageKind.LEAVE_TO_PRED,
                                      {"successor": state.successor}))
    outbox.append(MessageEnvelope(state.id, state.successor, MessageKind.LEAVE_TO_SUCC,
                                  {"predecessor": state.predecessor}))
    return outbox


# ---------------------------------------------------------------------------
# Routing
# ---------------------------------------------------------------------------

def closest_preceding_node(state: NodeState, h: int, ping: Callable[[int], bool]) -> int:
    """Highest live finger strictly inside (id, h), or the successor when there is none."""
    for candidate in reversed(state.finger):
        if candidate in (state.id, h):
            continue
        if member_of(candidate, state.id, h) and ping(candidate):
            return candidate
    return state.successor


def route_step(state: NodeState, h: int, ping: Callable[[int], bool]) -> Tuple[bool, int]:
    """
    One hop of find_successor.

    Returns:
        (True, successor) when this node can answer, (False, next hop) otherwise
    """
    if member_of(h, state.id, state.successor):
        return True, state.successor
    return False, closest_preceding_node(state, h, ping)


def _start_lookup(result: RuleResult, h: int, purpose: str, params: Dict[str, Any], ctx: RuleContext) -> None:
    state = result.state
    corr = state.new_corr()
    state.pending[corr] = PendingRequest(purpose, h, ctx.clock, params)
    answered, node = route_step(state, h, ctx.ping)
    if answered:
        _complete_lookup(result, corr, node, 0, ctx)
    else:
        result.send(MessageKind.FIND_SUCC_REQ, node, {"h": h, "origin": state.id, "hops": 1}, corr)


def _complete_lookup(result: RuleResult, corr: int, resolved: Optional[int], hops: int, ctx: RuleContext) -> None:
    state = result.state
    request = state.pending.pop(corr, None)
    if request is None:
        return

    if resolved is None:
        result.observe("lookup_timeout", purpose=request.purpose, h=request.target, hops=hops)
    else:
        result.observe("lookup_resolved", purpose=request.purpose, h=request.target, node=resolved, hops=hops)

    if request.purpose == FINGER:
        index = request.params["index"]
        if resolved is not None:
            state.finger[index - 1] = resolved
        state.next = state.next % ctx.m_bits + 1
    elif request.purpose == PUT:
        key, value = request.params["key"], request.params["value"]
        if resolved is None:
            result.observe("put_failed", key=key, h=request.target, reason="LookupTimeout")
        elif resolved == state.id:
            _store(result, request.target, value, key)
        else:
            result.send(MessageKind.STORE_KEY, resolved, {"h": request.target, "key": key, "value": value})
    elif request.purpose == GET:
        key = request.params["key"]
        if resolved is None:
            result.observe("get_answer", key=key, h=request.target, value=None, holder=None, timeout=True)
        elif resolved == state.id:
            value = answer_get(state, request.target)
            result.observe("get_answer", key=key, h=request.target, value=value, holder=state.id, timeout=False)
        else:
            state.pending[corr] = PendingRequest(GET_FETCH, resolved, ctx.clock, {"key": key, "h": request.target})
            result.send(MessageKind.GET_KEY_REQ, resolved, {"h": request.target}, corr)


def _store(result: RuleResult, h: int, value: str, key: Optional[str] = None) -> None:
    result.state.keyvalue[h] = value
    result.observe("stored", h=h, key=key, value=value)


def answer_get(state: NodeState, h: int) -> Optional[str]:
    # Only the responsible node answers, and only for a pair it actually holds
    if state.predecessor is None or not member_of(h, state.predecessor, state.id):
        return None
    return state.keyvalue.get(h)


# ---------------------------------------------------------------------------
# Periodic rules
# ---------------------------------------------------------------------------

def rule_stabilize(state: NodeState, ctx: RuleContext) -> RuleResult:
    """
    Ask the successor for its predecessor, adopting it when it sits between us.
    A round whose reply is overdue lets the node check its successor with ping
    and repair a dead one from the finger table.
    """
    result = RuleResult(state.clone())
    node = result.state

    corr = node.pending_for(STABILIZE)
    if corr is not None:
        request = node.pending.pop(corr)
        if request.target == node.successor:
            if ctx.clock < request.issued_at + DIRECT_ROUND_TRIP:
                node.pending[corr] = request
                return result
            if not ctx.ping(node.successor):
                _repair_successor(result, ctx)
                return result

    if node.successor == node.id:
        # Alone on our arc: our own predecessor plays the successor's role
        candidate = node.predecessor
        if candidate is not None and candidate != node.id and ctx.ping(candidate):
            node.set_successor(candidate)
            result.send(MessageKind.NOTIFY, candidate, {"candidate": node.id})
        else:
            _accept_notify(result, node.id)
        return result

    corr = node.new_corr()
    node.pending[corr] = PendingRequest(STABILIZE, node.successor, ctx.clock)
    result.send(MessageKind.GET_PRED_REQ, node.successor, {}, corr)
    return result


def _repair_successor(result: RuleResult, ctx: RuleContext) -> None:
    node = result.state
    dead = node.successor
    live = sorted(
        {f for f in node.finger if f != node.id and f != dead and ctx.ping(f)},
        key=lambda f: ring_distance(node.id, f, ctx.n_slots),
    )
    if live:
        replacement = live[0]
    elif node.predecessor not in (None, node.id, dead) and ctx.ping(node.predecessor):
        replacement = node.predecessor
    else:
        replacement = node.id
    node.set_successor(replacement)
    result.observe("successor_repaired", dead=dead, successor=replacement)
    logger.debug(f"Node {node.id} replaced dead successor {dead} with {replacement}")


def rule_update_predecessor(state: NodeState, ctx: RuleContext) -> RuleResult:
    """Forget a predecessor that no longer answers ping."""
    result = RuleResult(state.clone())
    node = result.state
    if node.predecessor is not None and node.predecessor != node.id and not ctx.ping(node.predecessor):
        result.observe("predecessor_cleared", predecessor=node.predecessor)
        node.predecessor = None
    return result


def rule_update_fingers(state: NodeState, ctx: RuleContext) -> RuleResult:
    """
    Refresh the finger entry `next` points at, then move `next` on.
    Entry 1 is the successor; the others are looked up one at a time.
    """
    result = RuleResult(state.clone())
    node = result.state

    corr = node.pending_for(FINGER)
    if corr is not None:
        request = node.pending[corr]
        if ctx.clock < request.issued_at + ctx.lookup_deadline:
            return result
        _complete_lookup(result, corr, None, ctx.hop_budget, ctx)
        return result

    if node.next == 1:
        node.finger[0] = node.successor
        node.next = node.next % ctx.m_bits + 1
        return result

    target = ring_add(node.id, 2 ** (node.next - 1), ctx.n_slots)
    _start_lookup(result, target, FINGER, {"index": node.next}, ctx)
    return result


# ---------------------------------------------------------------------------
# Chosen actions
# ---------------------------------------------------------------------------

def rule_put(state: NodeState, key: str, h: int, value: str, ctx: RuleContext) -> RuleResult:
    """Route hash(key) to its responsible node and store the pair there."""
    result = RuleResult(state.clone())
    _start_lookup(result, h, PUT, {"key": key, "value": value}, ctx)
    return result


def rule_get(state: NodeState, key: str, h: int, ctx: RuleContext) -> RuleResult:
    """Route hash(key) to its responsible node and ask it for the value. No node state changes."""
    result = RuleResult(state.clone())
    _start_lookup(result, h, GET, {"key": key}, ctx)
    return result


# ---------------------------------------------------------------------------
# Message handling
# ---------------------------------------------------------------------------

def rule_read_messages(state: NodeState, ctx: RuleContext) -> RuleResult:
    """
    Drain the inbox in arrival order, dispatching every envelope to its handler,
    then expire client requests whose replies are overdue.
    """
    result = RuleResult(state.clone())
    node = result.state
    inbox, node.inbox = node.inbox, []

    for envelope in inbox:
        handler = _HANDLERS.get(envelope.kind)
        if handler is None or envelope.receiver != node.id:
            result.observe("malformed", envelope=envelope.summary())
            continue
        try:
            handler(result, envelope, ctx)
        except (KeyError, TypeError, ValueError) as e:
            logger.warning(f"Node {node.id} dropped malformed envelope {envelope.summary()}: {e}")
            result.observe("malformed", envelope=envelope.summary())

    _expire_client_requests(result, ctx)
    return result


def _expire_client_requests(result: RuleResult, ctx: RuleContext) -> None:
    node = result.state
    for corr, request in sorted(node.pending.items()):
        if request.purpose in (PUT, GET):
            if ctx.clock >= request.issued_at + ctx.lookup_deadline:
                _complete_lookup(result, corr, None, ctx.hop_budget, ctx)
        elif request.purpose == GET_FETCH:
            if ctx.clock >= request.issued_at + DIRECT_ROUND_TRIP:
                node.pending.pop(corr)
                result.observe("get_answer", key=request.params["key"], h=request.params["h"],
                               value=None, holder=request.target, timeout=True)


def _on_find_succ_req(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    node = result.state
    h = envelope.payload["h"]
    origin = envelope.payload["origin"]
    hops = envelope.payload["hops"]
    answered, target = route_step(node, h, ctx.ping)
    if answered:
        result.send(MessageKind.FIND_SUCC_RESP, origin, {"h": h, "result": target, "hops": hops}, envelope.corr)
    elif hops + 1 > ctx.hop_budget:
        result.send(MessageKind.FIND_SUCC_RESP, origin, {"h": h, "result": None, "hops": hops}, envelope.corr)
    else:
        result.send(MessageKind.FIND_SUCC_REQ, target, {"h": h, "origin": origin, "hops": hops + 1}, envelope.corr)


def _on_find_succ_resp(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    _complete_lookup(result, envelope.corr, envelope.payload["result"], envelope.payload["hops"], ctx)


def _on_get_pred_req(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    result.send(MessageKind.GET_PRED_RESP, envelope.sender, {"predecessor": result.state.predecessor}, envelope.corr)


def _on_get_pred_resp(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    node = result.state
    request = node.pending.get(envelope.corr)
    if request is None or request.purpose != STABILIZE:
        return
    del node.pending[envelope.corr]
    if envelope.sender != node.successor:
        # Our successor changed while the question was in flight
        return
    candidate = envelope.payload["predecessor"]
    if (candidate is not None and candidate not in (node.id, node.successor)
            and member_of(candidate, node.id, node.successor) and ctx.ping(candidate)):
        node.set_successor(candidate)
    result.send(MessageKind.NOTIFY, node.successor, {"candidate": node.id})


def _on_notify(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    _accept_notify(result, envelope.payload["candidate"])


def _accept_notify(result: RuleResult, candidate: int) -> None:
    node = result.state
    if node.predecessor is not None:
        if candidate == node.id or not member_of(candidate, node.predecessor, node.id):
            return
    if candidate == node.predecessor:
        return
    node.predecessor = candidate
    if candidate == node.id:
        return
    # Pairs outside (candidate, id] now belong to the new predecessor
    moving = sorted(h for h in node.keyvalue if not member_of(h, candidate, node.id))
    if moving:
        pairs = [[h, node.keyvalue.pop(h)] for h in moving]
        result.send(MessageKind.TRANSFER_KEYS, candidate, {"pairs": pairs})


def _on_store_key(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    _store(result, envelope.payload["h"], envelope.payload["value"], envelope.payload.get("key"))


def _on_get_key_req(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    h = envelope.payload["h"]
    result.send(MessageKind.GET_KEY_RESP, envelope.sender, {"h": h, "value": answer_get(result.state, h)},
                envelope.corr)


def _on_get_key_resp(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    request = result.state.pending.pop(envelope.corr, None)
    if request is None or request.purpose != GET_FETCH:
        return
    result.observe("get_answer", key=request.params["key"], h=envelope.payload["h"],
                   value=envelope.payload["value"], holder=envelope.sender, timeout=False)


def _on_transfer_keys(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    for h, value in envelope.payload["pairs"]:
        result.state.keyvalue[h] = value


def _on_leave_to_pred(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    node = result.state
    if envelope.sender == node.successor:
        node.set_successor(envelope.payload["successor"])


def _on_leave_to_succ(result: RuleResult, envelope: MessageEnvelope, ctx: RuleContext) -> None:
    node = result.state
    if envelope.sender == node.predecessor:
        node.predecessor = envelope.payload["predecessor"]


_HANDLERS = {
    MessageKind.FIND_SUCC_REQ: _on_find_succ_req,
    MessageKind.FIND_SUCC_RESP: _on_find_succ_resp,
    MessageKind.GET_PRED_REQ: _on_get_pred_req,
    MessageKind.GET_PRED_RESP: _on_get_pred_resp,
    MessageKind.NOTIFY: _on_notify,
    MessageKind.STORE_KEY: _on_store_key,
    MessageKind.GET_KEY_REQ: _on_get_key_req,
    MessageKind.GET_KEY_RESP: _on_get_key_resp,
    MessageKind.TRANSFER_KEYS: _on_transfer_keys,
    MessageKind.LEAVE_TO_PRED: _on_leave_to_pred,
    MessageKind.LEAVE_TO_SUCC: _on_leave_to_succ,
}

PERIODIC_RULES = {
    "ReadMessages": rule_read_messages,
    "Stabilize": rule_stabilize,
    "UpdatePredecessor": rule_update_predecessor,
    "UpdateFingers": rule_update_fingers,
}
