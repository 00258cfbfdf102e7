"""
Scenario file parsing and rendering.

Line format (UTF-8, `#` starts a comment):

    ring_bits 3
    at 0: start peer=P1 id=1
    at 1: join peer=P3 id=3 via=1
    at 35: put node=1 key=k2 hash=2 value=v2
    at 36: quiesce budget=100
    at 36: assert golden_rule expect=fail
"""

import logging
import re
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from chord.exceptions import ScenarioParseError
from simulator.events import Action, ScenarioEvent

logger = logging.getLogger("chordsim.scenario.parser")

_EVENT_LINE = re.compile(r"^at\s+(\d+)\s*:\s*(\S+)(.*)$")
_PAIR_KIND = re.compile(r"^stable_pair\((\d+),(\d+)\)$")

ASSERTION_KINDS = ("stable", "stable_pair", "golden_rule", "get_sound", "not_converged")

# Allowed parameters per action: name -> (required, integer, identifier)
_PARAMS: Dict[Action, Dict[str, Tuple[bool, bool, bool]]] = {
    Action.START: {"peer": (True, False, False), "id": (False, True, True)},
    Action.JOIN: {"peer": (True, False, False), "id": (False, True, True), "via": (False, True, True)},
    Action.FAIR_LEAVE: {"node": (True, True, True)},
    Action.UNFAIR_LEAVE: {"node": (True, True, True)},
    Action.PUT: {"node": (True, True, True), "key": (True, False, False), "hash": (False, True, True),
                 "value": (False, False, False)},
    Action.GET: {"node": (True, True, True), "key": (True, False, False), "hash": (False, True, True),
                 "expect": (False, False, False)},
    Action.QUIESCE: {"budget": (False, True, False)},
    Action.ASSERT: {"expect": (False, False, False)},
}

# Which parameter becomes the event subject
_SUBJECT = {
    Action.START: "peer",
    Action.JOIN: "peer",
    Action.FAIR_LEAVE: "node",
    Action.UNFAIR_LEAVE: "node",
    Action.PUT: "node",
    Action.GET: "node",
}


class Scenario(BaseModel):
    """A parsed scenario: the ring size and the events in file order."""
    ring_bits: int = Field(..., gt=0, le=24)
    events: List[ScenarioEvent] = Field(default_factory=list)
    name: str = "scenario"


def _tokens(text: str, offset: int) -> List[Tuple[str, int]]:
    """Split on whitespace, keeping the 1-based column of every token."""
    return [(m.group(0), offset + m.start() + 1) for m in re.finditer(r"\S+", text)]


def parse_scenario(text: str, ring_bits: Optional[int] = None, name: str = "scenario") -> Scenario:
    """
    Parse scenario text.

    Args:
        text: Scenario source
        ring_bits: Ring size used when the text has no `ring_bits` header
        name: Name recorded on the scenario

    Returns:
        The validated Scenario

    Raises:
        ScenarioParseError: On a bad keyword, an out-of-range id or unsorted steps
    """
    bits = ring_bits
    events: List[ScenarioEvent] = []
    last_at = 0

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        line = line.strip()

        if line.startswith("ring_bits"):
            if events:
                raise ScenarioParseError("ring_bits must come before the first event", number, indent + 1)
            parts = line.split()
            if len(parts) != 2 or not parts[1].isdigit() or not 0 < int(parts[1]) <= 24:
                raise ScenarioParseError(f"bad ring_bits header: {line!r}", number, indent + 1)
            bits = int(parts[1])
            continue

        match = _EVENT_LINE.match(line)
        if match is None:
            raise ScenarioParseError(f"expected 'at <step>: <action> ...', got {line!r}", number, indent + 1)
        if bits is None:
            raise ScenarioParseError("ring_bits is not set", number, indent + 1)

        at = int(match.group(1))
        if at < last_at:
            raise ScenarioParseError(f"step {at} comes after step {last_at}", number, indent + match.start(1) + 1)
        last_at = at

        try:
            action = Action(match.group(2))
        except ValueError:
            raise ScenarioParseError(f"unknown action {match.group(2)!r}", number, indent + match.start(2) + 1)

        events.append(_parse_event(at, action, _tokens(match.group(3), indent + match.start(3)), bits, number))

    if bits is None:
        bits = 1
    logger.debug(f"Parsed {len(events)} events from {name}")
    return Scenario(ring_bits=bits, events=events, name=name)


def _parse_event(at: int, action: Action, tokens: List[Tuple[str, int]], bits: int, number: int) -> ScenarioEvent:
    n_slots = 2 ** bits
    params: Dict[str, Any] = {}
    allowed = _PARAMS[action]

    if action == Action.ASSERT:
        if not tokens:
            raise ScenarioParseError("assert needs a kind", number, 1)
        kind, column = tokens.pop(0)
        pair = _PAIR_KIND.match(kind)
        if pair:
            params.update(kind="stable_pair", a=int(pair.group(1)), b=int(pair.group(2)))
            for ident in (params["a"], params["b"]):
                if ident >= n_slots:
                    raise ScenarioParseError(f"identifier {ident} out of range for {n_slots} slots", number, column)
        elif kind in ASSERTION_KINDS and kind != "stable_pair":
            params["kind"] = kind
        else:
            raise ScenarioParseError(f"unknown assertion kind {kind!r}", number, column)

    for token, column in tokens:
        if "=" not in token:
            raise ScenarioParseError(f"expected key=value, got {token!r}", number, column)
        key, value = token.split("=", 1)
        if key not in allowed:
            raise ScenarioParseError(f"{action.value} does not take {key!r}", number, column)
        required, integer, identifier = allowed[key]
        if integer:
            if not value.isdigit():
                raise ScenarioParseError(f"{key} must be a non-negative integer, got {value!r}", number, column)
            value = int(value)
            if identifier and value >= n_slots:
                raise ScenarioParseError(f"{key}={value} out of range for {n_slots} slots", number, column)
        params[key] = value

    if action == Action.ASSERT and params.get("expect", "fail") != "fail":
        raise ScenarioParseError("assert only accepts expect=fail", number, 1)
    for key, (required, _, _) in allowed.items():
        if required and key not in params:
            raise ScenarioParseError(f"{action.value} needs {key}=", number, 1)

    subject = None
    if action in _SUBJECT:
        subject = params.pop(_SUBJECT[action])
    return ScenarioEvent(at=at, action=action, subject=subject, params=params)


def render_event(event: ScenarioEvent) -> str:
    """Render one event as a scenario line."""
    parts = [f"at {event.at}: {event.action.value}"]
    params = dict(event.params)
    if event.action == Action.ASSERT:
        kind = params.pop("kind")
        if kind == "stable_pair":
            kind = f"stable_pair({params.pop('a')},{params.pop('b')})"
        parts.append(kind)
    if event.action in _SUBJECT:
        parts.append(f"{_SUBJECT[event.action]}={event.subject}")
    parts.extend(f"{key}={params[key]}" for key in sorted(params))
    return " ".join(parts)


def render_scenario(scenario: Scenario) -> str:
    """Render a scenario back to text that parse_scenario reads unchanged."""
    lines = [f"ring_bits {scenario.ring_bits}"]
    lines.extend(render_event(event) for event in scenario.events)
    return "\n".join(lines) + "\n"
