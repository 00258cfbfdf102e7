"""
Externally injected actions: the Join and Action alphabets the scheduler draws from.
"""

from enum import Enum
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, Field


class Action(str, Enum):
    START = "start"
    JOIN = "join"
    FAIR_LEAVE = "fair_leave"
    UNFAIR_LEAVE = "unfair_leave"
    PUT = "put"
    GET = "get"
    QUIESCE = "quiesce"
    ASSERT = "assert"


# Actions the simulator applies; quiesce and assert are driven by the scenario runner
PROTOCOL_ACTIONS = frozenset({Action.START, Action.JOIN, Action.FAIR_LEAVE, Action.UNFAIR_LEAVE,
                              Action.PUT, Action.GET})
GATED_ACTIONS = frozenset({Action.JOIN, Action.FAIR_LEAVE, Action.UNFAIR_LEAVE, Action.PUT})


class ScenarioEvent(BaseModel):
    """
    One externally injected action at a simulation step.
    `subject` is a peer name for start/join and a node id for the other actions.
    """
    at: int = Field(..., ge=0, description="Earliest step at which the event fires")
    action: Action
    subject: Optional[Union[int, str]] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    def label(self) -> str:
        subject = f" {self.subject}" if self.subject is not None else ""
        extras = "".join(f" {k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.action.value}{subject}{extras}"

    @property
    def node(self) -> Optional[int]:
        return self.subject if isinstance(self.subject, int) else None
