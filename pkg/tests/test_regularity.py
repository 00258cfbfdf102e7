import random

import pytest
from pydantic import ValidationError

from chord.exceptions import InvariantBroken, PreconditionViolation
from chord.messages import MessageEnvelope, MessageKind
from chord.node_state import ALLOWED_TRANSITIONS, PeerMode
from chord.ring_math import RingConfig
from regularity.checkers import (
    check_fingers_fixpoint,
    check_get_soundness,
    check_golden_rule,
    check_node_invariants,
    check_stranded,
    is_converged,
)
from regularity.linearization import check_linearization_independence, sample_independent_pairs
from regularity.reports import StabilityReport, ViolationKind
from regularity.stability import (
    gate,
    is_stable_network,
    is_stable_pair,
    keys_in_flight,
    misrouting_node,
    neighbors,
    preceding_node,
    responsible_node,
    ring_walk,
)
from simulator.events import Action
from simulator.scheduler import new_world, quiesce, step
from simulator.world import deserialize_world, serialize_world
from tests.conftest import build_ring, event


def test_ring_order_helpers():
    assert responsible_node([1, 5, 9], 5) == 5
    assert responsible_node([1, 5, 9], 6) == 9
    assert responsible_node([1, 5, 9], 10) == 1
    assert responsible_node([], 3) is None
    assert neighbors([1, 5, 9], 1) == (9, 5)
    assert neighbors([4], 4) == (4, 4)
    assert preceding_node([1, 5, 9], 5) == 1
    assert preceding_node([1, 5, 9], 0) == 9


def test_ring_walk_goes_clockwise(ring_4):
    assert ring_walk(ring_4, 5, 1) == [5, 9, 13, 1]
    assert ring_walk(ring_4, 9, 13) == [9, 13]
    assert ring_walk(ring_4, 5, 5) == [5, 9, 13, 1, 5]


def test_converged_ring_is_stable_everywhere(ring_4):
    assert is_stable_network(ring_4).stable
    for x1 in ring_4.active_ids():
        for x2 in ring_4.active_ids():
            assert is_stable_pair(ring_4, x1, x2).stable
    assert is_converged(ring_4)


def test_broken_link_is_the_witness(ring_4):
    # Setup
    ring_4.nodes[9].predecessor = None

    # Execute
    report = is_stable_pair(ring_4, 1, 13)

    # Verify
    assert not report
    assert report.chain == (1, 5, 9, 13)
    assert report.witness_index == 1
    assert report.witness == "predecessor(9)=undef, expected 5"
    assert is_stable_pair(ring_4, 9, 1).stable


def test_outside_pointer_into_the_interval_breaks_the_pair(ring_4):
    ring_4.nodes[13].set_successor(5)
    report = is_stable_pair(ring_4, 1, 9)
    assert not report.stable
    assert "node 13 outside the chain points at 5" in report.witness


def test_inactive_ends_are_not_stable(ring_4):
    assert not is_stable_pair(ring_4, 1, 3).stable


def test_empty_network_is_stable():
    world = new_world(RingConfig(m_bits=3))
    assert is_stable_network(world).stable


def test_stability_report_needs_a_witness_exactly_when_unstable():
    with pytest.raises(ValidationError):
        StabilityReport(stable=True, witness="x")
    with pytest.raises(ValidationError):
        StabilityReport(stable=False)


def test_golden_rule_reports_misplaced_and_indeterminate_keys(ring_3):
    ring_3.nodes[9].keyvalue[2] = "v"
    ring_3.nodes[5].keyvalue[4] = "w"
    ring_3.nodes[5].predecessor = None

    reports = check_golden_rule(ring_3)

    assert [(r.kind, r.node, r.key) for r in reports] == [
        (ViolationKind.GOLDEN_RULE, 5, 4),
        (ViolationKind.GOLDEN_RULE, 9, 2),
    ]
    assert "indeterminate" in reports[0].detail
    assert reports[1].detail == "key outside (5,9]"
    assert reports[1].to_line().startswith(f"step={ring_3.clock} kind=GoldenRule node=9 key=2")


def test_get_soundness(ring_3):
    ring_3.nodes[9].keyvalue[7] = "v"
    report = check_get_soundness(ring_3, 7, None, origin=1)
    assert report.kind == ViolationKind.GET_UNSOUND
    assert report.node == 9
    assert check_get_soundness(ring_3, 7, "v") is None
    assert check_get_soundness(ring_3, 8, None) is None


def test_stranded_node_is_reported(ring_3):
    ring_3.nodes[5].set_successor(5)
    ring_3.nodes[5].predecessor = None
    ring_3.nodes[1].set_successor(9)
    ring_3.nodes[9].predecessor = 1

    reports = check_stranded(ring_3)

    assert [(r.kind, r.node) for r in reports] == [(ViolationKind.STRANDED, 5)]
    assert check_stranded(build_ring([3], m_bits=3)) == []


def test_stale_finger_is_reported(ring_4):
    ring_4.nodes[1].finger[3] = 13
    reports = check_fingers_fixpoint(ring_4)
    assert [(r.kind, r.node, r.detail) for r in reports] == [
        (ViolationKind.FINGER_STALE, 1, "finger[4]=13, expected 9"),
    ]
    assert not is_converged(ring_4)


def test_node_invariants_raise(ring_3):
    check_node_invariants(ring_3)
    ring_3.nodes[5].finger.append(5)
    with pytest.raises(InvariantBroken):
        check_node_invariants(ring_3)


def test_forbidden_mode_change_breaks_the_invariants(ring_3):
    ring_3.set_mode("P7", PeerMode.LEAVING)
    with pytest.raises(InvariantBroken) as info:
        check_node_invariants(ring_3)
    assert "peer P7 went from not_connected to leaving" in str(info.value)


def test_leaves_follow_the_allowed_mode_changes(ring_3):
    step(ring_3, [event(Action.FAIR_LEAVE, 5), event(Action.UNFAIR_LEAVE, 9)])
    quiesce(ring_3)
    changes = {peer: [(old, new) for _, name, old, new in ring_3.mode_history if name == peer]
               for peer in ("P5", "P9")}
    assert changes["P5"][-2:] == [(PeerMode.CONNECTED, PeerMode.LEAVING), (PeerMode.LEAVING, PeerMode.NOT_CONNECTED)]
    assert changes["P9"][-1] == (PeerMode.CONNECTED, PeerMode.NOT_CONNECTED)
    assert set(changes["P5"] + changes["P9"]) <= ALLOWED_TRANSITIONS


def test_deferred_events_block_convergence(ring_3):
    ring_3.deferred.append(event(Action.FAIR_LEAVE, 5))
    assert not is_converged(ring_3)


def test_keys_in_flight_covers_puts_stores_and_transfers(ring_3):
    ring_3.bus.append(MessageEnvelope(1, 9, MessageKind.STORE_KEY, {"h": 7, "key": "k7", "value": "v"}))
    ring_3.bus.append(MessageEnvelope(5, 1, MessageKind.TRANSFER_KEYS, {"pairs": [[0, "a"], [15, "b"]]}))
    assert keys_in_flight(ring_3) == [0, 7, 15]


def test_put_gate_allows_a_stable_pair(ring_3):
    decision = gate(ring_3, event(Action.PUT, 1, key="k"), 7)
    assert decision.allowed
    assert decision.pair == (5, 9)


def test_put_gate_waits_for_a_misrouting_node(ring_4):
    # Setup
    ring_4.nodes[1].set_successor(13)

    # Execute
    decision = gate(ring_4, event(Action.PUT, 1, key="k"), 7)

    # Verify
    assert misrouting_node(ring_4, 7) == 1
    assert is_stable_pair(ring_4, 5, 9).stable
    assert not decision.allowed
    assert decision.witness == "node 1 would route 7 to 13"


def test_put_gate_waits_for_an_earlier_pair_with_the_same_key(ring_3):
    ring_3.bus.append(MessageEnvelope(5, 9, MessageKind.TRANSFER_KEYS, {"pairs": [[7, "old"]]}))
    assert not gate(ring_3, event(Action.PUT, 1, key="k"), 7).allowed
    assert gate(ring_3, event(Action.PUT, 1, key="k"), 3).allowed


def test_leave_gate_waits_for_membership_traffic(ring_3):
    ring_3.bus.append(MessageEnvelope(5, 1, MessageKind.LEAVE_TO_PRED, {"successor": 9}))
    decision = gate(ring_3, event(Action.FAIR_LEAVE, 9), 9)
    assert not decision.allowed
    assert decision.pair == (5, 1)


def test_leave_gate_waits_for_keys_sent_to_the_leaver(ring_3):
    ring_3.bus.append(MessageEnvelope(1, 5, MessageKind.STORE_KEY, {"h": 4, "key": "k4", "value": "v"}))
    assert not gate(ring_3, event(Action.UNFAIR_LEAVE, 5), 5).allowed


def test_ungated_actions_and_empty_worlds_pass(ring_3):
    assert gate(ring_3, event(Action.GET, 1, key="k"), 7).allowed
    empty = new_world(RingConfig(m_bits=3))
    assert gate(empty, event(Action.JOIN, "P1"), 1).allowed


def test_independent_moves_commute(ring_4):
    # Setup
    before = serialize_world(ring_4)
    ring_4.nodes[1].predecessor = None

    # Execute
    result = check_linearization_independence(ring_4, (1, "Stabilize"), (13, "ReadMessages"))

    # Verify
    assert result.equal
    assert result.diff is None
    assert serialize_world(ring_4) != before
    ring_4.nodes[1].predecessor = 13
    assert serialize_world(ring_4) == before


def test_swap_test_needs_distinct_active_nodes(ring_4):
    with pytest.raises(PreconditionViolation):
        check_linearization_independence(ring_4, (1, "Stabilize"), (1, "UpdateFingers"))
    with pytest.raises(PreconditionViolation):
        check_linearization_independence(ring_4, (2, "Stabilize"), (1, "UpdateFingers"))
    with pytest.raises(PreconditionViolation):
        check_linearization_independence(ring_4, (1, "Teleport"), (5, "UpdateFingers"))


def test_sampled_pairs_all_commute(ring_4):
    pairs = sample_independent_pairs(ring_4, random.Random(0), 50)
    assert len(pairs) == 50
    assert all(first[0] != second[0] for first, second in pairs)
    assert all(check_linearization_independence(ring_4, first, second).equal for first, second in pairs)
    assert sample_independent_pairs(build_ring([3], m_bits=3), random.Random(0), 5) == []


def test_stability_reads_only_what_serialization_keeps(ring_4):
    # Setup: a join and a put in flight
    step(ring_4, [event(Action.JOIN, "P7", id=7, via=1), event(Action.PUT, 13, key="k3", hash=3, value="three")])
    step(ring_4, [])
    assert ring_4.joining and ring_4.bus

    # Execute
    restored = deserialize_world(serialize_world(ring_4))

    # Verify
    assert serialize_world(restored, bookkeeping=False) == serialize_world(ring_4, bookkeeping=False)
    assert restored.clock == ring_4.clock
    for x1 in ring_4.active_ids():
        for x2 in ring_4.active_ids():
            assert is_stable_pair(restored, x1, x2) == is_stable_pair(ring_4, x1, x2)
    assert is_stable_network(restored) == is_stable_network(ring_4)


def test_deserializing_rejects_foreign_lines():
    with pytest.raises(ValueError):
        deserialize_world("node id=1\n")
    with pytest.raises(ValueError):
        deserialize_world("config m_bits=3 n_slots=8 l_peers=8 k_keys=8 mode=regular\nweather sunny\n")
