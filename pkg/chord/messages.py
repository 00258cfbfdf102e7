"""
Protocol messages exchanged between Chord nodes through the simulator bus.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional


class MessageKind(str, Enum):
    FIND_SUCC_REQ = "FindSuccReq"
    FIND_SUCC_RESP = "FindSuccResp"
    GET_PRED_REQ = "GetPredReq"
    GET_PRED_RESP = "GetPredResp"
    NOTIFY = "Notify"
    STORE_KEY = "StoreKey"
    GET_KEY_REQ = "GetKeyReq"
    GET_KEY_RESP = "GetKeyResp"
    TRANSFER_KEYS = "TransferKeys"
    LEAVE_TO_PRED = "LeaveToPred"
    LEAVE_TO_SUCC = "LeaveToSucc"


# Envelopes that move keys or change membership; used by the quiescence and gate checks
KEY_CARRYING = frozenset({MessageKind.STORE_KEY, MessageKind.TRANSFER_KEYS})
MEMBERSHIP = frozenset({MessageKind.LEAVE_TO_PRED, MessageKind.LEAVE_TO_SUCC})


@dataclass(slots=True)
class MessageEnvelope:
    """
    A routed protocol message. `corr` links a reply to the request that caused it
    and is unique among the requests in flight from one originating node.
    """
    sender: int
    receiver: int
    kind: MessageKind
    payload: Dict[str, Any] = field(default_factory=dict)
    corr: Optional[int] = None

    def summary(self) -> str:
        """Render the envelope as a single stable token used in traces."""
        parts = [f"{self.kind.value}({self.sender}->{self.receiver}"]
        if self.corr is not None:
            parts.append(f" corr={self.corr}")
        for name in sorted(self.payload):
            parts.append(f" {name}={_render_value(self.payload[name])}")
        parts.append(")")
        return "".join(parts)


def _render_value(value: Any) -> str:
    if value is None:
        return "undef"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_render_value(v) for v in value) + "]"
    return str(value)
