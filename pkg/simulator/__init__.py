"""
Deterministic discrete-event world for ChordSim: peers, the message bus and the step scheduler.
"""

from .events import Action, ScenarioEvent
from .world import RunMode, World, serialize_world
from .scheduler import (
    StepOutcome,
    QuiesceResult,
    new_world,
    step,
    fire_rule,
    apply_event,
    ping,
    known_nodes,
    quiesce,
    resolve_lookup,
    resolve_get,
)

__all__ = [
    "Action",
    "ScenarioEvent",
    "RunMode",
    "World",
    "serialize_world",
    "StepOutcome",
    "QuiesceResult",
    "new_world",
    "step",
    "fire_rule",
    "apply_event",
    "ping",
    "known_nodes",
    "quiesce",
    "resolve_lookup",
    "resolve_get",
]
