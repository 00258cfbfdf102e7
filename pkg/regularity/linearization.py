"""
Swap test for independent moves: two rule firings at distinct nodes, applied
in both orders, must leave the same world behind.
"""

import copy
import logging
import random
from dataclasses import dataclass
from typing import List, Optional, Tuple

from chord.exceptions import PreconditionViolation
from chord.node_rules import PERIODIC_RULES
from simulator.scheduler import fire_rule
from simulator.world import World, serialize_world

logger = logging.getLogger("chordsim.regularity")

Move = Tuple[int, str]


@dataclass(frozen=True)
class SwapResult:
    first: Move
    second: Move
    equal: bool
    diff: Optional[str] = None


def enabled_moves(world: World) -> List[Move]:
    """Every periodic rule is enabled at every active node."""
    return [(node_id, rule_name) for node_id in world.active_ids() for rule_name in PERIODIC_RULES]


def _apply(world: World, moves: List[Move]) -> str:
    scratch = copy.deepcopy(world)
    for node_id, rule_name in moves:
        fire_rule(scratch, node_id, rule_name)
    return serialize_world(scratch, canonical_bus=True)


def _first_difference(left: str, right: str) -> str:
    for a, b in zip(left.splitlines(), right.splitlines()):
        if a != b:
            return f"{a!r} vs {b!r}"
    return "serializations differ in length"


def check_linearization_independence(world: World, first: Move, second: Move) -> SwapResult:
    """
    Apply two moves at distinct nodes in both orders and compare the canonical
    serializations. The world itself is not modified.

    Args:
        world: World in which both moves are enabled
        first: (node id, rule name)
        second: (node id, rule name) at a different node

    Returns:
        SwapResult telling whether both orders agree
    """
    for node_id, rule_name in (first, second):
        if node_id not in world.nodes:
            raise PreconditionViolation(f"Node {node_id} is not active")
        if rule_name not in PERIODIC_RULES:
            raise PreconditionViolation(f"Unknown rule {rule_name}")
    if first[0] == second[0]:
        raise PreconditionViolation(f"Both moves fire at node {first[0]}; their footprints overlap")

    forward = _apply(world, [first, second])
    backward = _apply(world, [second, first])
    if forward == backward:
        return SwapResult(first, second, True)
    diff = _first_difference(forward, backward)
    logger.warning(f"Moves {first} and {second} do not commute at step {world.clock}: {diff}")
    return SwapResult(first, second, False, diff)


def sample_independent_pairs(world: World, rng: random.Random, count: int) -> List[Tuple[Move, Move]]:
    """Draw move pairs at distinct nodes; empty when fewer than two nodes are active."""
    moves = enabled_moves(world)
    if len(world.nodes) < 2:
        return []
    pairs = []
    while len(pairs) < count:
        first, second = rng.sample(moves, 2)
        if first[0] != second[0]:
            pairs.append((first, second))
    return pairs
