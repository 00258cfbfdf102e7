"""
Result records produced by the regularity predicates and checkers.
"""

from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class ViolationKind(str, Enum):
    GOLDEN_RULE = "GoldenRule"
    GET_UNSOUND = "GetUnsound"
    STRANDED = "Stranded"
    GATE_BREACH = "GateBreach"
    FINGER_STALE = "FingerStale"
    NOT_CONVERGED = "NotConverged"


class StabilityReport(BaseModel):
    """Outcome of a stable-pair check over the chain y0 = x1, ..., yr = x2."""
    pair: Optional[Tuple[int, int]] = Field(None, description="The pair <x1, x2>, None for an empty network")
    stable: bool
    chain: Tuple[int, ...] = Field(default=(), description="Active nodes from x1 to x2 in ring order")
    witness_index: Optional[int] = Field(None, description="First i where the chain breaks")
    witness: Optional[str] = None

    @model_validator(mode="after")
    def _witness_iff_unstable(self) -> "StabilityReport":
        if self.stable == (self.witness is not None):
            raise ValueError("A witness is present exactly when the pair is not stable")
        return self

    def __bool__(self) -> bool:
        return self.stable


class ViolationReport(BaseModel):
    """A checker finding, reproducible from the scenario, the seed and the step."""
    kind: ViolationKind
    step: int = 0
    node: Optional[int] = None
    key: Optional[int] = None
    detail: str = ""
    state_digest: str = ""

    def to_line(self) -> str:
        node = "-" if self.node is None else self.node
        key = "-" if self.key is None else self.key
        return f"step={self.step} kind={self.kind.value} node={node} key={key} detail={self.detail}"
