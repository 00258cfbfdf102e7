"""
Global simulation state and its canonical text serialization.
"""

import logging
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from chord.messages import MessageEnvelope, MessageKind
from chord.node_rules import Observation
from chord.node_state import NodeState, PeerMode
from chord.ring_math import HashAssignment, RingConfig
from .events import ScenarioEvent

logger = logging.getLogger("chordsim.world")


class RunMode(str, Enum):
    REGULAR = "regular"
    UNRESTRICTED = "unrestricted"


@dataclass
class PeerRecord:
    name: str
    mode: PeerMode = PeerMode.NOT_CONNECTED
    node_id: Optional[int] = None


@dataclass
class PendingJoin:
    """A peer whose join request is in flight. It can receive envelopes but is not a node yet."""
    peer: str
    node_id: int
    contact: int
    issued_at: int
    attempts: int = 0
    inbox: List[MessageEnvelope] = field(default_factory=list)


@dataclass
class WorldStats:
    messages_sent: int = 0
    messages_delivered: int = 0
    messages_dropped: int = 0
    malformed: int = 0
    lookups: int = 0
    hops_total: int = 0
    hops_max: int = 0
    lookup_timeouts: int = 0
    joins: int = 0
    join_failures: int = 0
    deferrals: int = 0
    keys_lost: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


@dataclass
class World:
    """
    Everything the simulator owns: peers and their modes, active nodes, the
    message bus, the hash assignment, the clock and the seeded generator.
    """
    config: RingConfig
    mode_flag: RunMode = RunMode.REGULAR
    seed: int = 0
    hop_budget_factor: int = 4
    peers: Dict[str, PeerRecord] = field(default_factory=dict)
    nodes: Dict[int, NodeState] = field(default_factory=dict)
    joining: Dict[int, PendingJoin] = field(default_factory=dict)
    bus: List[MessageEnvelope] = field(default_factory=list)
    hash_assignment: Optional[HashAssignment] = None
    clock: int = 0
    rng: Optional[random.Random] = None
    stats: WorldStats = field(default_factory=WorldStats)
    deferred: List[ScenarioEvent] = field(default_factory=list)
    observations: List[Tuple[int, Observation]] = field(default_factory=list)
    mode_history: List[Tuple[int, str, PeerMode, PeerMode]] = field(default_factory=list)

    def __post_init__(self):
        if self.hash_assignment is None:
            self.hash_assignment = HashAssignment(self.config.n_slots)
        if self.rng is None:
            self.rng = random.Random(self.seed)

    @property
    def m_bits(self) -> int:
        return self.config.m_bits

    @property
    def hop_budget(self) -> int:
        return self.hop_budget_factor * self.config.m_bits

    def active_ids(self) -> List[int]:
        return sorted(self.nodes)

    def peer_of(self, node_id: int) -> Optional[str]:
        return self.hash_assignment.owner_of(node_id)

    def set_mode(self, peer: str, mode: PeerMode) -> None:
        record = self.peers.setdefault(peer, PeerRecord(peer))
        if record.mode != mode:
            self.mode_history.append((self.clock, peer, record.mode, mode))
            record.mode = mode

    def outstanding_client_requests(self) -> int:
        return sum(
            1
            for node in self.nodes.values()
            for request in node.pending.values()
            if request.purpose in ("put", "get", "get_fetch")
        )


def _render_optional(value: Optional[int]) -> str:
    return "undef" if value is None else str(value)


def render_keys(node: NodeState, with_values: bool = True) -> str:
    if with_values:
        return "{" + ",".join(f"{h}:{node.keyvalue[h]}" for h in sorted(node.keyvalue)) + "}"
    return "{" + ",".join(str(h) for h in sorted(node.keyvalue)) + "}"


def render_node(node: NodeState, bookkeeping: bool = True) -> str:
    fingers = ",".join(str(f) for f in node.finger)
    line = (f"node id={node.id} pred={_render_optional(node.predecessor)} succ={node.successor} "
            f"finger=[{fingers}] next={node.next} keys={render_keys(node)}")
    if bookkeeping:
        pending = ",".join(
            f"{corr}:{request.purpose}@{request.issued_at}->{request.target}"
            for corr, request in sorted(node.pending.items())
        )
        inbox = ";".join(envelope.summary() for envelope in node.inbox)
        line += f" corr={node.next_corr} pending=[{pending}] inbox=[{inbox}]"
    return line


def serialize_world(world: World, canonical_bus: bool = False, bookkeeping: bool = True) -> str:
    """
    Canonical, human-diffable text form of the world.

    Args:
        world: World to render
        canonical_bus: Group the bus per (sender, receiver) pair instead of queue order.
            Delivery is FIFO per pair only, so two worlds that differ just in the
            interleaving of different senders are equivalent.
        bookkeeping: Include correlation counters, pending tables, inboxes and counters

    Returns:
        The serialized world
    """
    config = world.config
    lines = [
        f"config m_bits={config.m_bits} n_slots={config.n_slots} l_peers={config.l_peers} "
        f"k_keys={config.k_keys} mode={world.mode_flag.value}"
    ]
    if bookkeeping:
        lines.append(f"clock {world.clock}")
    for node_id in sorted(world.nodes):
        lines.append(render_node(world.nodes[node_id], bookkeeping))
    for node_id in sorted(world.joining):
        join = world.joining[node_id]
        lines.append(f"joining id={node_id} peer={join.peer} contact={join.contact} issued={join.issued_at}")

    if canonical_bus:
        queues = defaultdict(list)
        for envelope in world.bus:
            queues[(envelope.sender, envelope.receiver)].append(envelope.summary())
        for pair in sorted(queues):
            lines.extend(f"bus {summary}" for summary in queues[pair])
    else:
        lines.extend(f"bus {envelope.summary()}" for envelope in world.bus)

    for name in sorted(world.peers):
        record = world.peers[name]
        lines.append(f"peer {name} {record.mode.value} id={_render_optional(record.node_id)}")
    if bookkeeping:
        lines.extend(f"deferred {event.label()}" for event in world.deferred)
        counters = " ".join(f"{k}={v}" for k, v in world.stats.as_dict().items())
        lines.append(f"stats {counters}")
    return "\n".join(lines) + "\n"


_NODE_LINE = re.compile(
    r"node id=(?P<id>\d+) pred=(?P<pred>\S+) succ=(?P<succ>\d+) finger=\[(?P<finger>[^\]]*)\] "
    r"next=(?P<next>\d+) keys=\{(?P<keys>[^}]*)\}"
)
_JOINING_LINE = re.compile(r"joining id=(?P<id>\d+) peer=(?P<peer>\S+) contact=(?P<contact>\d+) issued=(?P<issued>\d+)")
_PEER_LINE = re.compile(r"peer (?P<name>\S+) (?P<mode>\S+) id=(?P<id>\S+)")
_ENVELOPE = re.compile(r"(?P<kind>\w+)\((?P<sender>-?\d+)->(?P<receiver>-?\d+)(?P<fields>[^()]*)\)")


def _parse_optional(token: str) -> Optional[int]:
    return None if token == "undef" else int(token)


def _split_top_level(text: str) -> List[str]:
    parts, depth, current = [], 0, []
    for char in text:
        if char == "," and depth == 0:
            parts.append("".join(current))
            current = []
            continue
        depth += (char == "[") - (char == "]")
        current.append(char)
    if current or parts:
        parts.append("".join(current))
    return parts


def _parse_value(token: str) -> Any:
    """Inverse of the envelope value rendering; integer-looking tokens come back as ints."""
    if token == "undef":
        return None
    if token.startswith("[") and token.endswith("]"):
        return [_parse_value(part) for part in _split_top_level(token[1:-1])]
    if re.fullmatch(r"-?\d+", token):
        return int(token)
    return token


def parse_envelope(summary: str) -> MessageEnvelope:
    """Rebuild an envelope from its trace summary."""
    match = _ENVELOPE.fullmatch(summary)
    if match is None:
        raise ValueError(f"Not an envelope summary: {summary!r}")
    corr, payload = None, {}
    for token in match.group("fields").split():
        name, _, value = token.partition("=")
        if name == "corr":
            corr = int(value)
        else:
            payload[name] = _parse_value(value)
    return MessageEnvelope(int(match.group("sender")), int(match.group("receiver")),
                           MessageKind(match.group("kind")), payload, corr)


def deserialize_world(text: str) -> World:
    """
    Rebuild a world from serialize_world output.

    Pointers, keys, joiners, the bus, peers and the clock are restored.
    Bookkeeping (pending tables, inboxes, deferred events and counters) is
    skipped, so checks that read only pointer state give the same answers on
    the restored world.

    Raises:
        ValueError: On a line that is not part of the serialized form
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("config "):
        raise ValueError("Serialized world must start with its config line")
    header = dict(token.split("=", 1) for token in lines[0].split()[1:])
    config = RingConfig(m_bits=int(header["m_bits"]), l_peers=int(header["l_peers"]), k_keys=int(header["k_keys"]))
    world = World(config=config, mode_flag=RunMode(header["mode"]))

    for number, line in enumerate(lines[1:], start=2):
        keyword = line.split(" ", 1)[0]
        if keyword == "clock":
            world.clock = int(line.split()[1])
        elif keyword == "node" and (match := _NODE_LINE.match(line)):
            keyvalue = {}
            for pair in filter(None, match.group("keys").split(",")):
                h, _, value = pair.partition(":")
                keyvalue[int(h)] = value
            node_id = int(match.group("id"))
            world.nodes[node_id] = NodeState(
                id=node_id,
                successor=int(match.group("succ")),
                predecessor=_parse_optional(match.group("pred")),
                finger=[int(f) for f in match.group("finger").split(",")],
                next=int(match.group("next")),
                keyvalue=keyvalue,
            )
        elif keyword == "joining" and (match := _JOINING_LINE.fullmatch(line)):
            node_id = int(match.group("id"))
            world.joining[node_id] = PendingJoin(match.group("peer"), node_id, int(match.group("contact")),
                                                 int(match.group("issued")))
        elif keyword == "bus":
            world.bus.append(parse_envelope(line[len("bus "):]))
        elif keyword == "peer" and (match := _PEER_LINE.fullmatch(line)):
            node_id = _parse_optional(match.group("id"))
            world.peers[match.group("name")] = PeerRecord(match.group("name"), PeerMode(match.group("mode")), node_id)
            if node_id is not None:
                world.hash_assignment.peer_to_id[match.group("name")] = node_id
        elif keyword not in ("deferred", "stats"):
            raise ValueError(f"Line {number}: cannot restore {line!r}")
    logger.debug(f"Restored world with {len(world.nodes)} nodes at clock {world.clock}")
    return world
