"""
Trace records: one snapshot per simulator step, rendered as a table of node
rows with a column marking the cells the step changed.
"""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from simulator.scheduler import StepOutcome
from simulator.world import World

COLUMNS = ("pred", "succ", "next", "keys")


class TraceRow(BaseModel):
    id: int
    pred: Optional[int] = None
    succ: int
    next: int
    keys: Tuple[int, ...] = ()
    finger: Tuple[int, ...] = ()
    changed: Tuple[str, ...] = ()

    def cells(self) -> Dict[str, object]:
        return {"pred": self.pred, "succ": self.succ, "next": self.next, "keys": self.keys}

    def render(self, verbose_fingers: bool = False) -> str:
        pred = "undef" if self.pred is None else self.pred
        keys = "{" + ",".join(str(h) for h in self.keys) + "}"
        line = f"  id={self.id} pred={pred} succ={self.succ} next={self.next} keys={keys}"
        if verbose_fingers:
            line += " finger=[" + ",".join(str(f) for f in self.finger) + "]"
        if self.changed:
            line += " changed=" + ",".join(self.changed)
        return line


class TraceRecord(BaseModel):
    """Snapshot of the world after one step."""
    step: int
    fired: List[str] = Field(default_factory=list)
    delivered: List[str] = Field(default_factory=list)
    choices: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    rows: List[TraceRow] = Field(default_factory=list)
    joining: List[int] = Field(default_factory=list)
    bus: List[str] = Field(default_factory=list)

    def projection(self) -> Tuple[Tuple[int, Optional[int], int, Tuple[int, ...]], ...]:
        """The columns Example-style state tables show: id, predecessor, successor, key ids."""
        return tuple((row.id, row.pred, row.succ, row.keys) for row in self.rows)

    def render(self, verbose_fingers: bool = False) -> str:
        lines = [f"== step {self.step} =="]
        if self.fired:
            lines.append("fired " + " ".join(self.fired))
        if self.delivered:
            lines.append("delivered " + " ".join(self.delivered))
        lines.extend(f"choice {choice}" for choice in self.choices)
        lines.extend(f"note {note}" for note in self.notes)
        lines.extend(row.render(verbose_fingers) for row in self.rows)
        lines.extend(f"  joining id={node_id}" for node_id in self.joining)
        lines.extend(f"  bus {summary}" for summary in self.bus)
        return "\n".join(lines)


def snapshot_rows(world: World, previous: Optional[List[TraceRow]] = None) -> List[TraceRow]:
    """Rows for every active node in ascending id order, diffed against the previous rows."""
    before = {row.id: row for row in previous or []}
    rows = []
    for node_id in sorted(world.nodes):
        node = world.nodes[node_id]
        row = TraceRow(id=node_id, pred=node.predecessor, succ=node.successor, next=node.next,
                       keys=tuple(node.key_ids()), finger=tuple(node.finger))
        old = before.get(node_id)
        if old is None:
            changed = ("id",) + COLUMNS
        else:
            changed = tuple(column for column in COLUMNS if row.cells()[column] != old.cells()[column])
        rows.append(row.model_copy(update={"changed": changed}))
    return rows


def make_record(world: World, outcome: Optional[StepOutcome], previous: Optional[TraceRecord],
                notes: Optional[List[str]] = None) -> TraceRecord:
    """Build the record for the step that just ran."""
    step = outcome.step if outcome is not None else world.clock
    record_notes = list(notes or [])
    fired, delivered, choices = [], [], []
    if outcome is not None:
        fired = [f"{node_id}:{rule}" for node_id, rule in outcome.fired]
        delivered = list(outcome.delivered)
        choices = list(outcome.external_choices)
        record_notes.extend(f"deferred {text}" for text in outcome.deferred)
        record_notes.extend(f"failed {text}" for text in outcome.failures)
    return TraceRecord(
        step=step,
        fired=fired,
        delivered=delivered,
        choices=choices,
        notes=record_notes,
        rows=snapshot_rows(world, previous.rows if previous else None),
        joining=sorted(world.joining),
        bus=[envelope.summary() for envelope in world.bus],
    )


def trace_header(scenario: str, mode: str, seed: int, max_steps: int) -> str:
    return f"# chordsim trace scenario={scenario} mode={mode} seed={seed} max_steps={max_steps}"


def parse_trace_header(line: str) -> Dict[str, str]:
    """Read the key=value fields of a trace header line."""
    if not line.startswith("# chordsim trace"):
        raise ValueError(f"Not a chordsim trace header: {line!r}")
    fields = {}
    for token in line.split()[3:]:
        key, _, value = token.partition("=")
        fields[key] = value
    return fields


def render_trace(header: str, records: List[TraceRecord], verbose_fingers: bool = False,
                 footer: Optional[List[str]] = None) -> str:
    lines = [header]
    lines.extend(record.render(verbose_fingers) for record in records)
    lines.extend(footer or [])
    return "\n".join(lines) + "\n"


def split_steps(text: str) -> Dict[int, str]:
    """Map each step number of a rendered trace to its block of lines."""
    blocks: Dict[int, List[str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("#"):
            continue
        if line.startswith("== step "):
            current = int(line.split()[2])
            blocks.setdefault(current, [])
        if current is not None:
            blocks[current].append(line)
    return {step: "\n".join(lines) for step, lines in blocks.items()}
