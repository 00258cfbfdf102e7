"""
Fuzz campaign: many seeded random schedules driven through the scenario
driver, with the full check suite applied at every quiescent point.
"""

import asyncio
import hashlib
import json
import logging
import os
import random
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from chord.exceptions import LookupTimeout
from chord.ring_math import RingConfig
from regularity.checkers import check_fingers_fixpoint, check_get_soundness, check_golden_rule, check_stranded
from regularity.linearization import check_linearization_independence, sample_independent_pairs
from regularity.reports import ViolationKind
from regularity.stability import is_stable_network, responsible_node
from simulator.events import Action, ScenarioEvent
from simulator.scheduler import resolve_get, resolve_lookup
from simulator.world import RunMode, World
from .base_runner import BaseRunner
from .tools.driver import ScenarioDriver
from .tools.parser import Scenario
from .tools.trace_formatter import render_trace, trace_header

DEFAULT_WEIGHTS = {"join": 3, "fair_leave": 1, "unfair_leave": 1, "put": 3, "get": 2}

logger = logging.getLogger("chordsim.scenario.fuzz")

LEAVES = frozenset({Action.FAIR_LEAVE, Action.UNFAIR_LEAVE})

DEFAULT_CAMPAIGN = {
    "runs": 1,
    "nodes": 12,
    "events": 200,
    "ring_bits": 4,
    "seed": 0,
    "mode": RunMode.REGULAR.value,
    "quiesce_every": 10,
    "gap_steps": 2,
    "max_steps": 50000,
    "swap_samples": 10,
    "max_failure_rate": 0.05,
    "weights": DEFAULT_WEIGHTS,
}

# Violations that must not appear at quiescent states of regular runs
QUIESCENT_COLUMNS = ["golden_rule", "stranded", "get_unsound", "value_mismatches", "fingers_stale",
                     "lookup_mismatches", "lookup_timeouts", "hop_overruns", "swap_failures", "not_converged"]


def generate_schedule(rng: random.Random, ring_bits: int, nodes: int, events: int,
                      weights: Optional[Dict[str, int]] = None, quiesce_every: int = 10,
                      gap_steps: int = 2) -> List[ScenarioEvent]:
    """
    Build a random schedule of abstract events.

    Joins carry fresh ids that are never reused within a schedule. Leaves,
    puts and gets carry a `pick` in [0, 1) instead of a node: SubjectBinder
    turns it into an active node when the event fires. A quiesce follows every
    `quiesce_every` events and the schedule always ends with one.

    Args:
        rng: Generator the schedule is drawn from
        ring_bits: M
        nodes: Largest number of simultaneously active nodes
        events: Number of chosen actions after the initial start
        weights: Relative weight per action name
        quiesce_every: Events between quiesce phases, 0 for only the final one
        gap_steps: Largest step gap between consecutive events

    Returns:
        Events sorted by step
    """
    n_slots = 2 ** ring_bits
    if not 1 <= nodes <= n_slots:
        raise ValueError(f"nodes must be between 1 and {n_slots}, got {nodes}")
    weights = {**DEFAULT_WEIGHTS, **(weights or {})}

    fresh_ids = list(range(n_slots))
    rng.shuffle(fresh_ids)
    key_pool = [f"k{i}" for i in range(max(1, n_slots // 2))]

    first = fresh_ids.pop()
    schedule = [ScenarioEvent(at=0, action=Action.START, subject=f"P{first}", params={"id": first})]
    at = 1
    for index in range(events):
        at += rng.randint(0, gap_steps)
        choices = (["join"] if fresh_ids else []) + ["fair_leave", "unfair_leave", "put", "get"]
        action = rng.choices(choices, weights=[weights[c] for c in choices])[0]

        if action == "join":
            node_id = fresh_ids.pop()
            schedule.append(ScenarioEvent(at=at, action=Action.JOIN, subject=f"P{node_id}", params={"id": node_id}))
        else:
            params: Dict[str, Any] = {"pick": rng.random()}
            if action in ("put", "get"):
                params["key"] = rng.choice(key_pool)
            if action == "put":
                params["value"] = f"v{index}"
            schedule.append(ScenarioEvent(at=at, action=Action(action), params=params))

        if quiesce_every and (index + 1) % quiesce_every == 0 and index + 1 < events:
            schedule.append(ScenarioEvent(at=at, action=Action.QUIESCE))
    schedule.append(ScenarioEvent(at=at, action=Action.QUIESCE))
    return schedule


@dataclass
class SubjectBinder:
    """
    Binds abstract schedule events to the world they fire in. Joins beyond the
    node budget and leaves that would empty the ring are skipped.
    """
    nodes: int

    def __call__(self, world: World, events: List[ScenarioEvent]) -> List[Optional[ScenarioEvent]]:
        busy = {e.node for e in world.deferred if e.node is not None}
        leaving = {e.node for e in world.deferred if e.action in LEAVES}
        occupied = len(world.nodes) + len(world.joining) + sum(1 for e in world.deferred if e.action == Action.JOIN)

        bound: List[Optional[ScenarioEvent]] = []
        for event in events:
            if event.action == Action.JOIN:
                if occupied >= self.nodes:
                    bound.append(None)
                    continue
                occupied += 1
                bound.append(event)
                continue
            if "pick" not in event.params:
                bound.append(event)
                continue

            if event.action in LEAVES:
                candidates = [n for n in world.active_ids() if n not in busy]
                if len(world.nodes) - len(leaving) < 2:
                    candidates = []
            else:
                candidates = [n for n in world.active_ids() if n not in leaving]
            if not candidates:
                bound.append(None)
                continue

            params = {k: v for k, v in event.params.items() if k != "pick"}
            subject = candidates[int(event.params["pick"] * len(candidates))]
            busy.add(subject)
            if event.action in LEAVES:
                leaving.add(subject)
            bound.append(event.model_copy(update={"subject": subject, "params": params}))
        return bound


@dataclass
class QuiescentChecks:
    """Applies the check suite each time a fuzzed run reaches a quiescent state."""
    rng: random.Random
    expected: Dict[int, str] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=lambda: {column: 0 for column in QUIESCENT_COLUMNS})
    points: int = 0
    gets_checked: int = 0
    lookups_checked: int = 0
    swaps_checked: int = 0
    _seen: int = 0

    def track_values(self, world: World) -> None:
        """Follow stored and lost pairs so each key id maps to the value a get must return."""
        for _, observation in world.observations[self._seen:]:
            if observation.kind == "stored":
                self.expected[observation.data["h"]] = observation.data["value"]
            elif observation.kind == "keys_lost":
                for h in observation.data["keys"]:
                    self.expected.pop(h, None)
        self._seen = len(world.observations)

    def __call__(self, world: World) -> None:
        self.track_values(world)
        self.points += 1
        self.counts["golden_rule"] += len(check_golden_rule(world))
        self.counts["stranded"] += len(check_stranded(world))
        self.counts["fingers_stale"] += len(check_fingers_fixpoint(world))
        if not world.nodes:
            return

        active = world.active_ids()
        for h, value in sorted(self.expected.items()):
            origin = self.rng.choice(active)
            self.gets_checked += 1
            try:
                answer = resolve_get(world, origin, h)
            except LookupTimeout:
                self.counts["lookup_timeouts"] += 1
                continue
            if answer is None:
                if check_get_soundness(world, h, answer, origin) is not None:
                    self.counts["get_unsound"] += 1
                else:
                    self.counts["value_mismatches"] += 1
            elif answer != value:
                self.counts["value_mismatches"] += 1

    def exhaustive_lookups(self, world: World) -> int:
        """Resolve every key id from every node against the ring-order answer; returns the largest hop count."""
        active = world.active_ids()
        hops_max = 0
        for origin in active:
            for h in range(world.config.n_slots):
                self.lookups_checked += 1
                try:
                    target, hops = resolve_lookup(world, origin, h)
                except LookupTimeout:
                    self.counts["lookup_timeouts"] += 1
                    continue
                hops_max = max(hops_max, hops)
                if target != responsible_node(active, h):
                    self.counts["lookup_mismatches"] += 1
                if hops > world.m_bits:
                    self.counts["hop_overruns"] += 1
        return hops_max

    def swap_samples(self, world: World, count: int) -> None:
        for first, second in sample_independent_pairs(world, self.rng, count):
            self.swaps_checked += 1
            if not check_linearization_independence(world, first, second).equal:
                self.counts["swap_failures"] += 1


def run_one(seed: int, mode: str = RunMode.REGULAR.value, nodes: int = 12, events: int = 200,
            ring_bits: int = 4, quiesce_every: int = 10, gap_steps: int = 2, max_steps: int = 50000,
            swap_samples: int = 10, weights: Optional[Dict[str, int]] = None,
            convergence_factor: int = 8, max_failure_rate: float = 0.05) -> Dict[str, Any]:
    """
    Generate and run one schedule.

    A run whose events fail more often than `max_failure_rate` of the time
    (or whose driver gave up) is flagged as a harness error rather than a
    protocol result.

    Returns:
        One row of campaign statistics
    """
    schedule = generate_schedule(random.Random(seed), ring_bits, nodes, events, weights, quiesce_every, gap_steps)
    scenario = Scenario(ring_bits=ring_bits, events=schedule, name=f"fuzz-{seed}")
    checks = QuiescentChecks(rng=random.Random(seed + 1))
    driver = ScenarioDriver(scenario=scenario, mode=RunMode(mode), seed=seed, max_steps=max_steps,
                            convergence_factor=convergence_factor, on_quiescent=checks,
                            bind_events=SubjectBinder(nodes))
    driver.drive_events()
    driver.drain_outstanding()

    world = driver.world
    final_converged = bool(driver.quiesces) and driver.quiesces[-1].converged and not driver.failures
    hops_max = 0
    if final_converged and world.nodes:
        hops_max = checks.exhaustive_lookups(world)
        checks.swap_samples(world, swap_samples)
    checks.counts["not_converged"] = sum(1 for q in driver.quiesces if not q.converged)

    rounds = [q.rounds for q in driver.quiesces if q.converged]
    trace = render_trace(trace_header(scenario.name, mode, seed, max_steps), driver.records)
    row = {
        "seed": seed,
        "mode": mode,
        "events": len(schedule),
        "steps": world.clock,
        "final_nodes": len(world.nodes),
        "quiescent_points": checks.points,
        "max_rounds": max(rounds, default=0),
        "mean_rounds": sum(rounds) / len(rounds) if rounds else 0.0,
        "final_converged": final_converged,
        "final_stable": bool(is_stable_network(world)),
        **checks.counts,
        "gate_breach": sum(1 for r in driver.violations if r.kind == ViolationKind.GATE_BREACH),
        "in_run_get_unsound": sum(1 for r in driver.violations if r.kind == ViolationKind.GET_UNSOUND),
        "gets_checked": checks.gets_checked,
        "lookups_checked": checks.lookups_checked,
        "hops_max": hops_max,
        "swaps_checked": checks.swaps_checked,
        "deferrals": world.stats.deferrals,
        "join_failures": world.stats.join_failures,
        "keys_lost": world.stats.keys_lost,
        "driver_failures": len(driver.failures),
        "deferred_forever": len(driver.deferred_forever),
        "event_failures": len(driver.event_failures),
        "skipped_events": len(driver.skipped),
        "trace_digest": hashlib.sha256(trace.encode("utf-8")).hexdigest(),
    }
    protocol_events = sum(1 for e in schedule if e.action not in (Action.START, Action.QUIESCE))
    row["harness_error"] = bool(driver.failures) or row["event_failures"] > max_failure_rate * protocol_events
    row["clean"] = (row["final_converged"] and row["event_failures"] == 0
                    and all(row[column] == 0 for column in QUIESCENT_COLUMNS))
    for failure in driver.event_failures:
        logger.debug(f"Seed {seed}: {failure}")
    return row


def summarize(df: pd.DataFrame, mode: str) -> Dict[str, Any]:
    """
    Aggregate per-run rows.

    Args:
        df: One row per run
        mode: Run mode of the campaign

    Returns:
        Summary with convergence-round statistics and violation counts by kind
    """
    if df.empty:
        return {"runs": 0, "clean_runs": 0, "max_rounds": 0, "mean_rounds": 0.0, "violations": {},
                "harness_error_seeds": []}
    violations = {column: int(df[column].sum()) for column in QUIESCENT_COLUMNS + ["gate_breach", "in_run_get_unsound"]}
    return {
        "mode": mode,
        "runs": int(len(df)),
        "clean_runs": int(df["clean"].sum()),
        "max_rounds": int(df["max_rounds"].max()),
        "mean_rounds": round(float(df["mean_rounds"].mean()), 3),
        "max_steps_used": int(df["steps"].max()),
        "hops_max": int(df["hops_max"].max()),
        "gets_checked": int(df["gets_checked"].sum()),
        "lookups_checked": int(df["lookups_checked"].sum()),
        "swaps_checked": int(df["swaps_checked"].sum()),
        "deferrals": int(df["deferrals"].sum()),
        "violations": violations,
        "event_failures": int(df["event_failures"].sum()),
        "skipped_events": int(df["skipped_events"].sum()),
        "violating_seeds": [int(s) for s in df.loc[~df["clean"], "seed"]],
        "harness_error_seeds": [int(s) for s in df.loc[df["harness_error"], "seed"]],
    }


class FuzzCampaign(BaseRunner):
    """
    Runs a campaign of seeded random schedules and reports convergence
    statistics and violations.
    """

    def __init__(self, name: str = "fuzz", config: Optional[Dict[str, Any]] = None):
        """
        Initialize the fuzz campaign.

        Args:
            name: Runner identifier
            config: Campaign configuration, as stored in config/campaigns/<name>.json
        """
        super().__init__(name, {**DEFAULT_CAMPAIGN, **(config or {})})
        self.last_frame: Optional[pd.DataFrame] = None

    async def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Run the campaign.

        Args:
            input_data: Overrides for runs, nodes, events, seed, mode and
                report_path

        Returns:
            Campaign report
        """
        params = {**self.config, **{k: v for k, v in input_data.items() if v is not None}}
        report_path = params.pop("report_path", None)
        RunMode(params["mode"])
        RingConfig(m_bits=params["ring_bits"])

        self.logger.info(f"Fuzz campaign: {params['runs']} runs, {params['nodes']} nodes, "
                         f"{params['events']} events, mode={params['mode']}, seed={params['seed']}")
        started = time.perf_counter()
        rows = []
        for index in range(params["runs"]):
            seed = params["seed"] + index
            row = run_one(
                seed,
                mode=params["mode"],
                nodes=params["nodes"],
                events=params["events"],
                ring_bits=params["ring_bits"],
                quiesce_every=params["quiesce_every"],
                gap_steps=params["gap_steps"],
                max_steps=params["max_steps"],
                swap_samples=params["swap_samples"],
                weights=params["weights"],
                max_failure_rate=params["max_failure_rate"],
            )
            rows.append(row)
            if row["harness_error"]:
                self.logger.error(f"Seed {seed} is a harness error: {row['event_failures']} failed events, "
                                  f"{row['driver_failures']} driver failures")
            elif not row["clean"]:
                self.logger.warning(f"Seed {seed} reported violations: "
                                    f"{ {c: row[c] for c in QUIESCENT_COLUMNS if row[c]} }")
            else:
                self.logger.debug(f"Seed {seed} clean, max rounds {row['max_rounds']}")
            # Give other tasks a chance between runs
            await asyncio.sleep(0)

        df = pd.DataFrame(rows)
        self.last_frame = df
        summary = summarize(df, params["mode"])
        summary["runtime_seconds"] = round(time.perf_counter() - started, 3)

        report = {
            "campaign": self.name,
            "parameters": {k: params[k] for k in sorted(params)},
            "summary": summary,
            "runs": json.loads(df.to_json(orient="records")) if not df.empty else [],
        }
        if report_path:
            os.makedirs(os.path.dirname(os.path.abspath(report_path)), exist_ok=True)
            with open(report_path, "w", encoding="utf-8") as f:
                json.dump(report, f, indent=2)
            self.logger.info(f"Campaign report written to {report_path}")

        self.state["metrics"] = {k: summary[k] for k in ("runs", "clean_runs", "max_rounds")}
        self.logger.info(f"Fuzz campaign finished: {summary['clean_runs']}/{summary['runs']} clean runs, "
                         f"max rounds {summary['max_rounds']}")
        return report
