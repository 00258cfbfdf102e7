"""
Exceptions raised by the ChordSim protocol, simulator and scenario layers.
"""

from typing import Optional


class ChordSimError(Exception):
    """Base class for all ChordSim errors."""


class ExplicitIdOccupied(ChordSimError):
    """A scenario asked for an identifier that is already in use."""

    def __init__(self, subject: str, requested: int):
        super().__init__(f"Identifier {requested} requested for {subject} is already in use")
        self.subject = subject
        self.requested = requested


class JoinFailed(ChordSimError):
    """A peer could not join: dead contact, full ring or lost lookup."""


class KeySpaceFull(ChordSimError):
    """All identifiers of the key space are taken."""


class LookupTimeout(ChordSimError):
    """A routed lookup exceeded its hop budget or its reply was lost."""


class GateViolation(ChordSimError):
    """An event was refused by the regular-run gate and must be deferred."""

    def __init__(self, event_label: str, pair: tuple, witness: Optional[str] = None):
        detail = f" ({witness})" if witness else ""
        super().__init__(f"{event_label} deferred: pair <{pair[0]},{pair[1]}> is not stable{detail}")
        self.event_label = event_label
        self.pair = pair
        self.witness = witness


class NotConverged(ChordSimError):
    """Quiescence did not reach a converged state within its budget."""

    def __init__(self, rounds: int):
        super().__init__(f"Network did not converge within {rounds} rounds")
        self.rounds = rounds


class PreconditionViolation(ChordSimError):
    """An event was injected in a state where its rule is not enabled."""


class ScenarioParseError(ChordSimError):
    """A scenario file could not be parsed."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class InvariantBroken(ChordSimError):
    """A structural invariant of the world failed after a step."""
