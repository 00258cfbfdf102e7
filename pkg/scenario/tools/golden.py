"""
Golden state tables: transcribed snapshots that a trace must pass through in order.

File format, one table per block separated by blank lines:

    S0
    id=1 pred=* succ=3 keys=*
    id=3 pred=1 succ=* keys={}

`*` means the cell is not affected by the move and is not compared.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from .trace_formatter import TraceRecord

logger = logging.getLogger("chordsim.scenario.golden")

WILDCARD = "*"

Projection = Tuple[Tuple[int, Optional[int], int, Tuple[int, ...]], ...]


class GoldenTable(BaseModel):
    label: str
    rows: Dict[int, Dict[str, str]] = Field(default_factory=dict)

    def matches(self, state: Projection) -> bool:
        by_id = {node_id: (pred, succ, keys) for node_id, pred, succ, keys in state}
        if set(by_id) != set(self.rows):
            return False
        for node_id, cells in self.rows.items():
            pred, succ, keys = by_id[node_id]
            actual = {
                "pred": "undef" if pred is None else str(pred),
                "succ": str(succ),
                "keys": "{" + ",".join(str(h) for h in keys) + "}",
            }
            for column, expected in cells.items():
                if expected != WILDCARD and actual[column] != expected:
                    return False
        return True


def parse_golden(text: str) -> List[GoldenTable]:
    """Parse golden tables from text."""
    tables: List[GoldenTable] = []
    current: Optional[GoldenTable] = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            current = None
            continue
        if "=" not in line:
            current = GoldenTable(label=line)
            tables.append(current)
            continue
        if current is None:
            raise ValueError(f"Row outside a table: {raw!r}")
        cells = dict(token.split("=", 1) for token in line.split())
        node_id = int(cells.pop("id"))
        current.rows[node_id] = cells
    return tables


def distinct_states(records: Sequence[TraceRecord]) -> List[Tuple[int, Projection]]:
    """Projected states with consecutive duplicates collapsed, tagged with their first step."""
    states: List[Tuple[int, Projection]] = []
    for record in records:
        projection = record.projection()
        if not states or states[-1][1] != projection:
            states.append((record.step, projection))
    return states


def match_golden(records: Sequence[TraceRecord], tables: Sequence[GoldenTable]) -> Dict[str, int]:
    """
    Find the golden tables, in order, among the trace's distinct projected states.

    Returns:
        Step at which each table was first matched

    Raises:
        AssertionError: Naming the first table the trace never reaches
    """
    states = distinct_states(records)
    found: Dict[str, int] = {}
    position = 0
    for table in tables:
        while position < len(states) and not table.matches(states[position][1]):
            position += 1
        if position == len(states):
            raise AssertionError(f"Golden table {table.label} not reached after {list(found.items())}")
        found[table.label] = states[position][0]
        logger.debug(f"Golden table {table.label} matched at step {states[position][0]}")
    return found
