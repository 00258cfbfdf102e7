import asyncio
import json
import random

import pandas as pd
import pytest

from chord.node_rules import Observation
from scenario.fuzz_campaign import (
    QUIESCENT_COLUMNS,
    FuzzCampaign,
    QuiescentChecks,
    SubjectBinder,
    generate_schedule,
    run_one,
    summarize,
)
from scenario.tools.driver import ScenarioDriver
from scenario.tools.parser import Scenario
from simulator.events import Action, ScenarioEvent
from tests.conftest import build_ring, event


def abstract(action, pick, **params):
    return ScenarioEvent(at=0, action=action, params={"pick": pick, **params})


def test_schedule_is_well_formed():
    # Execute
    schedule = generate_schedule(random.Random(11), ring_bits=4, nodes=6, events=80, quiesce_every=10)

    # Verify
    assert schedule[0].action == Action.START
    assert schedule[-1].action == Action.QUIESCE
    assert [e.at for e in schedule] == sorted(e.at for e in schedule)
    ids = [e.params["id"] for e in schedule if e.action in (Action.START, Action.JOIN)]
    assert len(ids) == len(set(ids))
    protocol = [e for e in schedule if e.action not in (Action.START, Action.QUIESCE)]
    assert len(protocol) == 80
    assert sum(1 for e in schedule if e.action == Action.QUIESCE) == 8
    for e in protocol:
        if e.action != Action.JOIN:
            assert e.subject is None
            assert 0 <= e.params["pick"] < 1
    assert all(e.params["value"].startswith("v") for e in schedule if e.action == Action.PUT)


def test_schedule_is_a_function_of_the_generator():
    first = generate_schedule(random.Random(5), 4, 8, 50)
    second = generate_schedule(random.Random(5), 4, 8, 50)
    assert first == second


@pytest.mark.parametrize("nodes", [0, 17])
def test_schedule_rejects_impossible_sizes(nodes):
    with pytest.raises(ValueError):
        generate_schedule(random.Random(0), 4, nodes, 10)


def test_binder_picks_subjects_from_the_live_ring():
    # Setup
    world = build_ring([1, 5, 9])
    events = [
        event(Action.JOIN, "P7", id=7),
        abstract(Action.PUT, 0.5, key="k", value="v"),
        abstract(Action.FAIR_LEAVE, 0.0),
        abstract(Action.UNFAIR_LEAVE, 0.0),
        abstract(Action.FAIR_LEAVE, 0.0),
    ]

    # Execute
    join, put, fair, unfair, last = SubjectBinder(nodes=3)(world, events)

    # Verify
    assert join is None
    assert (put.subject, put.params) == (5, {"key": "k", "value": "v"})
    assert (fair.subject, fair.params) == (1, {})
    assert unfair.subject == 9
    assert last is None


def test_binder_keeps_leaves_off_nodes_with_deferred_events():
    world = build_ring([1, 5, 9])
    world.deferred.append(event(Action.PUT, 5, key="k", value="v"))
    leave, first_join, second_join = SubjectBinder(nodes=4)(world, [
        abstract(Action.FAIR_LEAVE, 0.5),
        event(Action.JOIN, "P3", id=3),
        event(Action.JOIN, "P12", id=12),
    ])
    assert leave.subject == 9
    assert first_join.subject == "P3"
    assert second_join is None


def test_bound_runs_stay_within_the_node_budget():
    # Setup
    schedule = generate_schedule(random.Random(14), ring_bits=4, nodes=4, events=80, gap_steps=0)
    sizes = []
    driver = ScenarioDriver(scenario=Scenario(ring_bits=4, events=schedule), seed=14, max_steps=20000,
                            bind_events=SubjectBinder(4),
                            on_step=lambda world, outcome: sizes.append(len(world.nodes) + len(world.joining)))

    # Execute
    driver.drive_events()
    driver.drain_outstanding()

    # Verify
    assert max(sizes) <= 4
    assert driver.event_failures == []
    assert driver.failures == []
    assert driver.skipped


def test_quiescent_checks_compare_gets_and_lookups():
    # Setup
    world = build_ring([1, 5, 9])
    world.nodes[9].keyvalue[7] = "seven"
    world.nodes[5].keyvalue[4] = "four"
    checks = QuiescentChecks(rng=random.Random(0), expected={7: "seven", 4: "old"})

    # Execute
    checks(world)

    # Verify
    assert checks.points == 1
    assert checks.gets_checked == 2
    assert checks.counts["value_mismatches"] == 1
    assert checks.counts["golden_rule"] == 0
    assert checks.exhaustive_lookups(world) <= world.m_bits
    assert checks.counts["lookup_mismatches"] == 0
    assert checks.lookups_checked == 3 * 16


def test_expected_values_follow_stored_and_lost_pairs():
    world = build_ring([1, 5, 9])
    world.observations.append((world.clock, Observation("stored", 9, {"h": 7, "key": "k7", "value": "a"})))
    world.observations.append((world.clock, Observation("stored", 5, {"h": 3, "key": "k3", "value": "b"})))
    world.observations.append((world.clock, Observation("stored", 9, {"h": 7, "key": "k7", "value": "c"})))
    world.observations.append((world.clock, Observation("keys_lost", 5, {"keys": [3]})))

    checks = QuiescentChecks(rng=random.Random(0))
    checks.track_values(world)

    assert checks.expected == {7: "c"}


def test_small_regular_run_is_clean():
    row = run_one(3, nodes=5, events=40, ring_bits=4, quiesce_every=10)
    assert row["clean"], {column: row[column] for column in QUIESCENT_COLUMNS}
    assert row["final_converged"]
    assert row["gate_breach"] == 0
    assert row["quiescent_points"] == 4
    assert row["event_failures"] == 0
    assert not row["harness_error"]


def test_runs_are_reproducible():
    first = run_one(9, nodes=5, events=30, ring_bits=4)
    second = run_one(9, nodes=5, events=30, ring_bits=4)
    assert first["trace_digest"] == second["trace_digest"]
    assert first == second


def test_unrestricted_runs_are_reported_not_gated():
    row = run_one(4, mode="unrestricted", nodes=6, events=60, ring_bits=4, gap_steps=0)
    assert row["mode"] == "unrestricted"
    assert row["deferrals"] == 0
    assert set(QUIESCENT_COLUMNS) <= set(row)


def test_summary_counts_violations_by_kind():
    rows = [
        {"seed": 0, "clean": True, "max_rounds": 4, "mean_rounds": 2.0, "steps": 100, "hops_max": 2,
         "gets_checked": 3, "lookups_checked": 10, "swaps_checked": 5, "deferrals": 1,
         "gate_breach": 0, "in_run_get_unsound": 0, "event_failures": 0, "skipped_events": 3,
         "harness_error": False, **{c: 0 for c in QUIESCENT_COLUMNS}},
        {"seed": 1, "clean": False, "max_rounds": 9, "mean_rounds": 3.0, "steps": 120, "hops_max": 3,
         "gets_checked": 1, "lookups_checked": 10, "swaps_checked": 5, "deferrals": 0,
         "gate_breach": 2, "in_run_get_unsound": 0, "event_failures": 30, "skipped_events": 0,
         "harness_error": True, **{c: 0 for c in QUIESCENT_COLUMNS}, "golden_rule": 2},
    ]

    summary = summarize(pd.DataFrame(rows), "unrestricted")

    assert summary["runs"] == 2
    assert summary["clean_runs"] == 1
    assert summary["max_rounds"] == 9
    assert summary["mean_rounds"] == 2.5
    assert summary["violations"]["golden_rule"] == 2
    assert summary["violations"]["gate_breach"] == 2
    assert summary["violating_seeds"] == [1]
    assert summary["harness_error_seeds"] == [1]
    assert summary["skipped_events"] == 3
    assert summarize(pd.DataFrame([]), "regular")["runs"] == 0


def test_campaign_writes_its_report(tmp_path):
    # Setup
    campaign = FuzzCampaign(name="tiny", config={"nodes": 4, "events": 20, "swap_samples": 2})
    report_path = str(tmp_path / "reports" / "tiny.json")

    # Execute
    report = asyncio.run(campaign.run({"runs": 2, "seed": 10, "mode": None, "report_path": report_path}))

    # Verify
    assert report["campaign"] == "tiny"
    assert report["parameters"]["mode"] == "regular"
    assert "report_path" not in report["parameters"]
    assert [row["seed"] for row in report["runs"]] == [10, 11]
    assert report["summary"]["runs"] == 2
    with open(report_path, "r", encoding="utf-8") as f:
        assert json.load(f)["summary"]["runs"] == 2
    assert campaign.last_frame is not None and len(campaign.last_frame) == 2
    assert campaign.get_state()["status"] == "completed"


def test_campaign_rejects_unknown_modes():
    campaign = FuzzCampaign(config={"runs": 1})
    with pytest.raises(ValueError):
        asyncio.run(campaign.run({"mode": "chaotic"}))
    assert campaign.get_state()["status"] == "error"
    assert (campaign.get_state()["runs_started"], campaign.get_state()["runs_failed"]) == (1, 1)


@pytest.mark.slow
def test_full_regular_campaign_is_clean():
    campaign = FuzzCampaign(name="default", config={"runs": 100, "swap_samples": 12})
    report = asyncio.run(campaign.run({}))
    summary = report["summary"]
    assert summary["clean_runs"] == 100, summary["violating_seeds"]
    assert all(summary["violations"][column] == 0 for column in QUIESCENT_COLUMNS + ["gate_breach"])
    assert summary["swaps_checked"] >= 1000
    assert summary["hops_max"] <= 4
