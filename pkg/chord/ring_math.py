"""
Identifier space arithmetic for the Chord ring.
Provides the ring configuration, the member_of interval predicate and the
hash assignment discipline for peers and keys.
"""

import logging
import random
from dataclasses import dataclass, field
from typing import Dict, Optional, Set

from pydantic import BaseModel, Field, model_validator

from .exceptions import ExplicitIdOccupied

logger = logging.getLogger("chordsim.ring")

# Identifiers are plain integers in [0, n_slots)
ChordId = int

PEER = "peer"
KEY = "key"


class RingConfig(BaseModel):
    """
    Sizes of the ring and of the peer and key universes.
    """
    m_bits: int = Field(..., gt=0, le=24, description="Number of identifier bits (M)")
    l_peers: Optional[int] = Field(None, gt=0, description="Number of peers (L), defaults to N")
    k_keys: Optional[int] = Field(None, gt=0, description="Number of keys (K), defaults to N")

    @model_validator(mode="after")
    def _check_universes(self) -> "RingConfig":
        if self.l_peers is None:
            self.l_peers = self.n_slots
        if self.k_keys is None:
            self.k_keys = self.n_slots
        if self.l_peers < self.n_slots:
            raise ValueError(f"l_peers={self.l_peers} is smaller than the ring size {self.n_slots}")
        return self

    @property
    def n_slots(self) -> int:
        return 2 ** self.m_bits

    def contains(self, x: int) -> bool:
        return 0 <= x < self.n_slots


def member_of(x: ChordId, a: ChordId, b: ChordId) -> bool:
    """
    Check whether x lies in the clockwise ring interval (a, b].

    Args:
        x: Identifier to test
        a: Exclusive start of the interval
        b: Inclusive end of the interval

    Returns:
        True if a == b (the full circle), if a < b and a < x <= b,
        or if a > b and not (b < x <= a) with the wrap past zero

    The wrapped case is the complement of (b, a], so b is in and a is out like
    in every other interval. Its complement written as b <= x < a would put a
    in and b out. The three cases cover every (a, b), so no fallback is needed.
    """
    if a == b:
        return True
    if a < b:
        return a < x <= b
    return not (b < x <= a)


def ring_add(base: ChordId, offset: int, n_slots: int) -> ChordId:
    """Return (base + offset) mod n_slots."""
    if offset < 0:
        raise ValueError(f"offset must be non-negative, got {offset}")
    return (base + offset) % n_slots


def ring_distance(a: ChordId, b: ChordId, n_slots: int) -> int:
    """Clockwise distance from a to b."""
    return (b - a) % n_slots


@dataclass
class HashAssignment:
    """
    The external hash function: which identifier each active peer and key holds.
    Peers and keys live in independent identifier spaces on the same ring.
    """
    n_slots: int
    peer_to_id: Dict[str, ChordId] = field(default_factory=dict)
    key_to_id: Dict[str, ChordId] = field(default_factory=dict)

    def table(self, sort: str) -> Dict[str, ChordId]:
        if sort == PEER:
            return self.peer_to_id
        if sort == KEY:
            return self.key_to_id
        raise ValueError(f"Unknown subject sort: {sort}")

    def lookup(self, subject: str, sort: str = PEER) -> Optional[ChordId]:
        return self.table(sort).get(subject)

    def owner_of(self, ident: ChordId, sort: str = PEER) -> Optional[str]:
        for subject, assigned in self.table(sort).items():
            if assigned == ident:
                return subject
        return None

    def release(self, subject: str, sort: str = PEER) -> None:
        self.table(sort).pop(subject, None)


def assign_hash(assignment: HashAssignment,
                subject: str,
                sort: str = PEER,
                explicit: Optional[ChordId] = None,
                rng: Optional[random.Random] = None) -> Optional[ChordId]:
    """
    Assign an identifier to a peer or a key.

    Args:
        assignment: Current assignment, updated in place on success
        subject: Peer name or key name
        sort: PEER or KEY
        explicit: Identifier requested by the scenario, if any
        rng: Deterministic generator used when no explicit id is given

    Returns:
        The assigned identifier, or None (undef) when every identifier is taken
    """
    table = assignment.table(sort)
    taken = set(table.values())

    if explicit is not None:
        if not 0 <= explicit < assignment.n_slots:
            raise ValueError(f"Identifier {explicit} is outside the ring of size {assignment.n_slots}")
        if explicit in taken and table.get(subject) != explicit:
            raise ExplicitIdOccupied(subject, explicit)
        table[subject] = explicit
        return explicit

    if len(taken) >= assignment.n_slots:
        logger.info(f"No free {sort} identifier left for {subject}")
        return None

    if rng is None:
        raise ValueError("Seeded-random policy needs a random generator")

    candidate = draw_free_id(taken, assignment.n_slots, rng)
    table[subject] = candidate
    return candidate


def draw_free_id(taken: Set[ChordId], n_slots: int, rng: random.Random) -> Optional[ChordId]:
    """
    Draw an identifier outside taken, or None when the ring is full.
    Rejection sampling keeps the draw a pure function of the generator state.
    """
    if len(taken) >= n_slots:
        return None
    while True:
        candidate = rng.randrange(n_slots)
        if candidate not in taken:
            return candidate
