"""
The two anomalies of unrestricted runs, replayed against their transcribed
state tables, and the same schedules under the regular-run gate.
"""

import asyncio
import os

import pytest

from regularity.checkers import check_golden_rule, check_stranded
from regularity.stability import is_stable_network
from scenario.scenario_runner import ScenarioRunner
from scenario.tools.driver import EXIT_ASSERTION, EXIT_OK
from scenario.tools.golden import match_golden, parse_golden
from tests.conftest import GOLDEN_DIR, SCENARIOS_DIR


def run_example(name, mode):
    path = os.path.join(SCENARIOS_DIR, f"{name}.scn")
    return asyncio.run(ScenarioRunner().run({"scenario_path": path, "mode": mode, "seed": 0}))


def golden_tables(name):
    with open(os.path.join(GOLDEN_DIR, f"{name}.states"), "r", encoding="utf-8") as f:
        return parse_golden(f.read())


@pytest.fixture(scope="module")
def misplaced_unrestricted():
    return run_example("example1a", "unrestricted")


@pytest.fixture(scope="module")
def stranded_unrestricted():
    return run_example("example1b", "unrestricted")


def test_key_misplacement_passes_through_every_state(misplaced_unrestricted):
    found = match_golden(misplaced_unrestricted["records"], golden_tables("example1a"))
    assert list(found) == ["S0", "S1", "S2", "S3", "S4", "S5"]
    assert list(found.values()) == sorted(found.values())


def test_key_misplacement_breaks_the_golden_rule(misplaced_unrestricted):
    world = misplaced_unrestricted["world"]
    assert misplaced_unrestricted["exit_status"] == EXIT_OK
    assert world.nodes[3].keyvalue == {2: "v2"}
    assert world.nodes[2].keyvalue == {}
    assert [(r.node, r.key) for r in check_golden_rule(world)] == [(3, 2)]
    assert any("kind=GateBreach" in line for line in misplaced_unrestricted["violations"])


def test_regular_run_places_the_key_correctly():
    result = run_example("example1a", "regular")
    world = result["world"]
    assert result["exit_status"] == EXIT_OK
    assert world.nodes[2].keyvalue == {2: "v2"}
    assert world.nodes[3].keyvalue == {}
    assert check_golden_rule(world) == []
    assert any("deferred put 1" in note for record in result["records"] for note in record.notes)
    assert not any("GateBreach" in line for line in result["violations"])


def test_stranded_node_passes_through_every_state(stranded_unrestricted):
    found = match_golden(stranded_unrestricted["records"], golden_tables("example1b"))
    assert list(found) == ["S0", "S1", "S2"]
    assert found["S0"] < found["S1"] < found["S2"]


def test_stranded_node_never_converges(stranded_unrestricted):
    world = stranded_unrestricted["world"]
    assert stranded_unrestricted["exit_status"] == EXIT_OK
    assert 3 not in world.nodes
    assert [r.node for r in check_stranded(world)] == [2]
    assert not is_stable_network(world).stable
    assert any("kind=NotConverged" in line for line in stranded_unrestricted["violations"])
    assert any("kind=Stranded" in line for line in stranded_unrestricted["violations"])


def test_regular_run_keeps_the_ring_connected():
    result = run_example("example1b", "regular")
    world = result["world"]
    assert result["exit_status"] == EXIT_OK
    assert world.active_ids() == [1, 2, 4]
    assert is_stable_network(world).stable
    assert check_stranded(world) == []
    assert any("deferred fair_leave 3" in note for record in result["records"] for note in record.notes)


def test_get_after_misplacement_is_unsound():
    # Execute
    result = run_example("example1a_get", "unrestricted")

    # Verify
    assert result["exit_status"] == EXIT_OK
    assert result["world"].nodes[3].keyvalue == {2: "v2"}
    unsound = [line for line in result["violations"] if "kind=GetUnsound" in line]
    assert len(unsound) == 1
    assert "node=3 key=2" in unsound[0]
    assert "get k2 at 1 -> undef" in result["trace_text"]
    assert all(" PASS" in line for line in result["assertions"])


def test_regular_get_finds_the_pair():
    result = run_example("example1a_get", "regular")
    assert "get k2 at 1 -> v2" in result["trace_text"]
    assert not any("kind=GetUnsound" in line for line in result["violations"])
    # The scenario expects the unrestricted answer
    assert result["exit_status"] == EXIT_ASSERTION
