"""
Drives a parsed scenario through the simulator: schedules its events by step,
runs quiesce phases, evaluates assertions and get expectations, and collects
trace records and violation reports.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from chord.exceptions import NotConverged
from chord.ring_math import RingConfig
from regularity.checkers import check_get_soundness, check_golden_rule, check_stranded
from regularity.reports import ViolationKind, ViolationReport
from regularity.stability import is_stable_network, is_stable_pair
from simulator.events import PROTOCOL_ACTIONS, Action, ScenarioEvent
from simulator.scheduler import StepOutcome, convergence_budget, new_world, quiesce, step
from simulator.world import RunMode, World
from .parser import Scenario
from .trace_formatter import TraceRecord, make_record

logger = logging.getLogger("chordsim.scenario.driver")

# Exit statuses of a scenario run
EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


@dataclass
class AssertionResult:
    step: int
    label: str
    passed: bool
    detail: str = ""

    def to_line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"assert step={self.step} {self.label} {verdict} {self.detail}".rstrip()


@dataclass
class QuiescePoint:
    step: int
    rounds: int
    converged: bool


@dataclass
class ScenarioDriver:
    """
    Owns the world for one run. `on_quiescent` is called with the world after
    every quiesce phase that converged. `bind_events` may rewrite the events due
    at a step just before they fire, or drop one by returning None in its place.
    """
    scenario: Scenario
    mode: RunMode = RunMode.REGULAR
    seed: int = 0
    max_steps: int = 2000
    hop_budget_factor: int = 4
    convergence_factor: int = 8
    on_quiescent: Optional[Callable[[World], None]] = None
    on_step: Optional[Callable[[World, StepOutcome], None]] = None
    bind_events: Optional[Callable[[World, List[ScenarioEvent]], List[Optional[ScenarioEvent]]]] = None
    world: Optional[World] = None
    records: List[TraceRecord] = field(default_factory=list)
    assertions: List[AssertionResult] = field(default_factory=list)
    violations: List[ViolationReport] = field(default_factory=list)
    quiesces: List[QuiescePoint] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    deferred_forever: List[str] = field(default_factory=list)
    event_failures: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    unacknowledged: int = 0
    get_expectations: Dict[str, List[str]] = field(default_factory=dict)
    _pending_notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.world is None:
            config = RingConfig(m_bits=self.scenario.ring_bits)
            self.world = new_world(config, RunMode(self.mode), self.seed, self.hop_budget_factor)
        self._observed = len(self.world.observations)
        for event in self.scenario.events:
            if event.action == Action.GET and "expect" in event.params:
                self.get_expectations.setdefault(str(event.params["key"]), []).append(str(event.params["expect"]))

    @property
    def unrestricted(self) -> bool:
        return self.world.mode_flag == RunMode.UNRESTRICTED

    # ------------------------------------------------------------------
    # Driving
    # ------------------------------------------------------------------

    def drive_events(self) -> None:
        """Fire every event at or after its step, in file order."""
        pending = list(self.scenario.events)
        while pending:
            if self.world.clock >= self.max_steps:
                self.failures.append(f"max_steps {self.max_steps} reached with {len(pending)} events left")
                logger.warning(self.failures[-1])
                return
            due = []
            while pending and pending[0].at <= self.world.clock:
                if pending[0].action == Action.QUIESCE and due:
                    break
                due.append(pending.pop(0))
                if due[-1].action == Action.QUIESCE:
                    break

            if due and due[0].action == Action.QUIESCE:
                self._run_quiesce(due[0])
                continue
            self._step(self._bind([e for e in due if e.action in PROTOCOL_ACTIONS]))
            for event in due:
                if event.action == Action.ASSERT:
                    self._evaluate_assertion(event)

    def drain_outstanding(self) -> None:
        """
        Keep stepping until client requests are answered and deferred events have fired.
        Deferred events that stay blocked for a whole convergence budget while nothing
        else is outstanding are given up and listed in `deferred_forever`.
        """
        stalled, waiting = 0, None
        while self.world.deferred or self.world.joining or self.world.outstanding_client_requests():
            if self.world.clock >= self.max_steps:
                self.failures.append(f"max_steps {self.max_steps} reached with requests outstanding")
                logger.warning(self.failures[-1])
                return
            labels = [e.label() for e in self.world.deferred]
            if self.world.joining or self.world.outstanding_client_requests() or labels != waiting:
                stalled, waiting = 0, labels
            elif stalled >= convergence_budget(self.world, self.convergence_factor):
                self.deferred_forever = labels
                self.failures.append(f"{len(labels)} deferred events never became enabled: {', '.join(labels)}")
                logger.warning(self.failures[-1])
                return
            stalled += 1
            self._step([])

    def _bind(self, events: List[ScenarioEvent]) -> List[ScenarioEvent]:
        if self.bind_events is None or not events:
            return events
        bound = self.bind_events(self.world, events)
        for original, event in zip(events, bound):
            if event is None:
                self.skipped.append(original.label())
                self._pending_notes.append(f"skipped {original.label()}")
        return [event for event in bound if event is not None]

    def _step(self, events: List[ScenarioEvent]) -> StepOutcome:
        _, outcome = step(self.world, events)
        self._record(outcome)
        return outcome

    def _record(self, outcome: StepOutcome) -> None:
        previous = self.records[-1] if self.records else None
        notes, self._pending_notes = self._pending_notes, []
        self.event_failures.extend(outcome.failures)
        self._collect_observations(notes)
        self.records.append(make_record(self.world, outcome, previous, notes))
        if self.on_step is not None:
            self.on_step(self.world, outcome)

    def _collect_observations(self, notes: List[str]) -> None:
        for clock, observation in self.world.observations[self._observed:]:
            if observation.kind == "get_answer":
                self._check_get_answer(observation.node, observation.data, notes)
            elif observation.kind == "gate_breach":
                report = ViolationReport(kind=ViolationKind.GATE_BREACH, step=clock, node=observation.node,
                                         detail=f"{observation.data['event']} fired while "
                                                f"{observation.data['witness']}")
                self.violations.append(report)
                notes.append(report.to_line())
        self._observed = len(self.world.observations)

    def _check_get_answer(self, origin: int, data: dict, notes: List[str]) -> None:
        value = data["value"]
        shown = "undef" if value is None else value
        notes.append(f"get {data['key']} at {origin} -> {shown}{' (timeout)' if data.get('timeout') else ''}")
        if not data.get("timeout"):
            report = check_get_soundness(self.world, data["h"], value, origin)
            if report is not None:
                self.violations.append(report)
                notes.append(report.to_line())

        queue = self.get_expectations.get(data["key"])
        if queue:
            expected = queue.pop(0)
            wanted = None if expected == "undef" else expected
            self.assertions.append(AssertionResult(self.world.clock - 1, f"get {data['key']} expect={expected}",
                                                   value == wanted, f"answered {shown}"))

    def _run_quiesce(self, event: ScenarioEvent) -> None:
        start = self.world.clock
        budget = event.params.get("budget")
        try:
            result = quiesce(self.world, budget, on_step=self._record, factor=self.convergence_factor)
        except NotConverged as e:
            self.quiesces.append(QuiescePoint(start, e.rounds, False))
            self.unacknowledged += 1
            self.violations.append(ViolationReport(kind=ViolationKind.NOT_CONVERGED, step=self.world.clock,
                                                   detail=f"quiesce from step {start} ran {e.rounds} rounds"))
            self._pending_notes.append(f"quiesce not converged after {e.rounds} rounds")
            return
        self.quiesces.append(QuiescePoint(start, result.rounds, True))
        self._pending_notes.append(f"quiesce converged after {result.rounds} rounds")
        if self.on_quiescent is not None:
            self.on_quiescent(self.world)

    # ------------------------------------------------------------------
    # Assertions
    # ------------------------------------------------------------------

    def _evaluate_assertion(self, event: ScenarioEvent) -> None:
        kind = event.params["kind"]
        expect_fail = event.params.get("expect") == "fail"
        holds, detail = self._check(kind, event)

        if kind == "not_converged":
            passed = holds
            if holds:
                self.unacknowledged = 0
        elif expect_fail and self.unrestricted:
            passed = not holds
            if kind == "stable" and passed and self.unacknowledged:
                self.unacknowledged = 0
        else:
            passed = holds

        label = event.label().removeprefix("assert ")
        result = AssertionResult(self.world.clock - 1, label, passed, detail)
        self.assertions.append(result)
        if self.records:
            self.records[-1].notes.append(result.to_line())
        log = logger.info if passed else logger.warning
        log(result.to_line())

    def _check(self, kind: str, event: ScenarioEvent):
        if kind == "stable":
            report = is_stable_network(self.world)
            return report.stable, report.witness or ""
        if kind == "stable_pair":
            report = is_stable_pair(self.world, event.params["a"], event.params["b"])
            return report.stable, report.witness or ""
        if kind == "golden_rule":
            reports = check_golden_rule(self.world)
            return not reports, "; ".join(r.to_line() for r in reports)
        if kind == "get_sound":
            unsound = [r for r in self.violations if r.kind == ViolationKind.GET_UNSOUND]
            return not unsound, "; ".join(r.to_line() for r in unsound)
        if kind == "not_converged":
            failed = bool(self.quiesces) and not self.quiesces[-1].converged
            return failed, "" if failed else "last quiesce converged"
        raise ValueError(f"Unknown assertion kind {kind}")

    # ------------------------------------------------------------------
    # Results
    # ------------------------------------------------------------------

    def final_violations(self) -> List[ViolationReport]:
        """Violations seen during the run plus the golden-rule and stranded checks on the final world."""
        return self.violations + check_golden_rule(self.world) + check_stranded(self.world)

    def exit_status(self) -> int:
        if self.failures or any(not a.passed for a in self.assertions):
            return EXIT_ASSERTION
        if self.unacknowledged:
            return EXIT_NOT_CONVERGED
        return EXIT_OK
