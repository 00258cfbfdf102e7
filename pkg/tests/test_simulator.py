import pytest

from chord.exceptions import ExplicitIdOccupied, GateViolation, NotConverged, PreconditionViolation
from chord.messages import MessageEnvelope, MessageKind
from chord.node_state import PeerMode
from chord.ring_math import RingConfig
from regularity.checkers import check_fingers_fixpoint, check_golden_rule
from regularity.stability import is_stable_network, responsible_node
from simulator.events import Action
from simulator.scheduler import JOIN_ATTEMPTS, apply_event, new_world, quiesce, resolve_get, resolve_lookup, step
from simulator.world import RunMode, serialize_world
from tests.conftest import build_ring, event


def observed(world, kind):
    return [observation for _, observation in world.observations if observation.kind == kind]


def test_joined_ring_converges(ring_4):
    assert is_stable_network(ring_4).stable
    assert check_fingers_fixpoint(ring_4) == []
    assert [ring_4.nodes[n].successor for n in (1, 5, 9, 13)] == [5, 9, 13, 1]
    assert [ring_4.nodes[n].predecessor for n in (1, 5, 9, 13)] == [13, 1, 5, 9]
    assert {record.node_id for record in ring_4.peers.values()} == {1, 5, 9, 13}
    assert all(record.mode == PeerMode.CONNECTED for record in ring_4.peers.values())


def test_random_ids_are_reproducible_from_the_seed():
    def run(seed):
        world = new_world(RingConfig(m_bits=5), RunMode.REGULAR, seed)
        step(world, [event(Action.START, "P0")])
        for name in ("P1", "P2", "P3", "P4"):
            step(world, [event(Action.JOIN, name)])
            quiesce(world)
        return serialize_world(world)

    assert run(7) == run(7)
    assert run(7) != run(8)


def test_lookups_agree_with_ring_order(ring_4):
    active = ring_4.active_ids()
    for origin in active:
        for h in range(ring_4.config.n_slots):
            target, hops = resolve_lookup(ring_4, origin, h)
            assert target == responsible_node(active, h)
            assert hops <= ring_4.m_bits


def test_resolve_get_does_not_touch_the_world(ring_4):
    # Setup
    ring_4.nodes[9].keyvalue[7] = "v"
    before = serialize_world(ring_4)

    # Execute
    answers = [resolve_get(ring_4, origin, 7) for origin in ring_4.active_ids()]

    # Verify
    assert answers == ["v"] * 4
    assert resolve_get(ring_4, 1, 8) is None
    assert serialize_world(ring_4) == before


def test_put_and_get_through_the_bus(ring_4):
    step(ring_4, [event(Action.PUT, 1, key="k7", hash=7, value="seven")])
    quiesce(ring_4)
    assert ring_4.nodes[9].keyvalue == {7: "seven"}
    assert check_golden_rule(ring_4) == []

    step(ring_4, [event(Action.GET, 13, key="k7")])
    quiesce(ring_4)
    answers = observed(ring_4, "get_answer")
    assert answers[-1].data["value"] == "seven"
    assert answers[-1].node == 13


def test_regular_run_defers_a_leave_next_to_a_join(ring_3):
    # Execute
    _, outcome = step(ring_3, [event(Action.JOIN, "P3", id=3, via=1), event(Action.FAIR_LEAVE, 5)])

    # Verify
    assert 5 in ring_3.nodes
    assert [e.action for e in ring_3.deferred] == [Action.FAIR_LEAVE]
    assert ring_3.stats.deferrals == 1
    assert "joining inside the interval" in outcome.deferred[0]

    quiesce(ring_3)
    assert ring_3.active_ids() == [1, 3, 9]
    assert ring_3.deferred == []
    assert is_stable_network(ring_3).stable
    assert observed(ring_3, "gate_breach") == []


def test_unrestricted_run_lets_the_leave_through(unrestricted_ring_3):
    world = unrestricted_ring_3
    step(world, [event(Action.JOIN, "P3", id=3, via=1), event(Action.FAIR_LEAVE, 5)])
    assert 5 not in world.nodes
    assert world.deferred == []
    breaches = observed(world, "gate_breach")
    assert len(breaches) == 1
    assert breaches[0].data["pair"] == (1, 9)


def test_join_waits_for_keys_in_flight_inside_its_interval(ring_3):
    # Setup
    ring_3.bus.append(MessageEnvelope(1, 9, MessageKind.STORE_KEY, {"h": 7, "key": "k7", "value": "v"}))

    # Execute
    with pytest.raises(GateViolation) as info:
        apply_event(ring_3, event(Action.JOIN, "P6", id=6, via=1))

    # Verify
    assert info.value.pair == (5, 9)
    assert ring_3.hash_assignment.lookup("P6") is None
    assert ring_3.joining == {}

    # A join elsewhere on the ring is not held up
    apply_event(ring_3, event(Action.JOIN, "P3", id=3, via=1))
    assert 3 in ring_3.joining


def test_unfair_leave_loses_the_leavers_keys(ring_3):
    ring_3.nodes[5].keyvalue[4] = "v"
    apply_event(ring_3, event(Action.UNFAIR_LEAVE, 5))
    assert 5 not in ring_3.nodes
    assert ring_3.stats.keys_lost == 1
    assert observed(ring_3, "keys_lost")[0].data == {"keys": [4]}
    assert ring_3.peers["P5"].mode == PeerMode.NOT_CONNECTED


def test_key_envelope_to_a_departed_node_loses_its_keys(ring_3):
    ring_3.bus.append(MessageEnvelope(1, 7, MessageKind.STORE_KEY, {"h": 6, "key": "k6", "value": "v"}))
    dropped_before = ring_3.stats.messages_dropped

    step(ring_3)

    assert ring_3.stats.messages_dropped == dropped_before + 1
    assert ring_3.stats.keys_lost == 1
    lost = observed(ring_3, "keys_lost")[0]
    assert (lost.node, lost.data) == (7, {"keys": [6]})


def test_fair_leave_hands_keys_to_the_successor(ring_3):
    ring_3.nodes[5].keyvalue[4] = "v"
    step(ring_3, [event(Action.FAIR_LEAVE, 5)])
    quiesce(ring_3)
    assert ring_3.active_ids() == [1, 9]
    assert ring_3.nodes[9].keyvalue == {4: "v"}
    assert ring_3.stats.keys_lost == 0
    assert check_golden_rule(ring_3) == []


def test_crash_is_repaired_by_stabilization(ring_4):
    step(ring_4, [event(Action.UNFAIR_LEAVE, 9)])
    quiesce(ring_4)
    assert ring_4.active_ids() == [1, 5, 13]
    assert ring_4.nodes[5].successor == 13
    assert ring_4.nodes[13].predecessor == 5
    assert check_fingers_fixpoint(ring_4) == []


def test_start_needs_an_empty_network(ring_3):
    with pytest.raises(PreconditionViolation):
        apply_event(ring_3, event(Action.START, "P2", id=2))


def test_leave_of_an_inactive_node_is_a_precondition_failure(ring_3):
    _, outcome = step(ring_3, [event(Action.FAIR_LEAVE, 2)])
    assert outcome.failures and outcome.failures[0].startswith("PreconditionViolation")


def test_explicit_id_in_use_is_refused(ring_3):
    with pytest.raises(ExplicitIdOccupied):
        apply_event(ring_3, event(Action.JOIN, "P7", id=5, via=1))


def test_join_into_an_empty_network_starts_it():
    world = new_world(RingConfig(m_bits=3))
    apply_event(world, event(Action.JOIN, "P4", id=4))
    assert world.active_ids() == [4]
    assert world.joining == {}
    assert world.peers["P4"].mode == PeerMode.CONNECTED


def test_quiesce_gives_up_when_the_budget_runs_out():
    world = new_world(RingConfig(m_bits=3))
    step(world, [event(Action.START, "P1", id=1)])
    step(world, [event(Action.JOIN, "P5", id=5, via=1)])
    with pytest.raises(NotConverged) as info:
        quiesce(world, max_rounds=0)
    assert info.value.rounds == 0


def test_hop_budget_scales_with_the_ring(ring_3):
    assert ring_3.hop_budget == 4 * ring_3.m_bits


def test_steps_advance_the_clock_and_deliver_after_one_step(ring_3):
    clock = ring_3.clock
    step(ring_3, [event(Action.PUT, 1, key="k7", hash=7, value="v")])
    assert ring_3.clock == clock + 1
    assert [e for e in ring_3.bus if e.kind == MessageKind.FIND_SUCC_REQ and e.payload["h"] == 7]
    _, outcome = step(ring_3)
    assert any(summary.startswith("FindSuccReq(1->") for summary in outcome.delivered)


def test_join_after_a_crash_waits_for_the_ring_to_heal():
    # Setup
    world = build_ring([1, 4, 11])

    # Execute
    _, outcome = step(world, [event(Action.UNFAIR_LEAVE, 1), event(Action.JOIN, "P15", id=15, via=11)])

    # Verify
    assert [e.action for e in world.deferred] == [Action.JOIN]
    assert outcome.failures == []

    quiesce(world, 500)
    assert world.active_ids() == [4, 11, 15]
    assert world.nodes[11].successor == 15
    assert world.nodes[15].successor == 4
    assert world.nodes[4].successor == 11
    assert is_stable_network(world).stable


def test_joiner_retries_when_its_successor_is_gone(ring_3):
    # Setup
    step(ring_3, [event(Action.JOIN, "P7", id=7, via=1)])
    ring_3.joining[7].inbox.append(
        MessageEnvelope(5, 7, MessageKind.FIND_SUCC_RESP, {"h": 7, "result": 11, "hops": 2}, corr=0))

    # Execute
    _, outcome = step(ring_3, [])

    # Verify
    assert 7 in ring_3.joining
    assert ring_3.joining[7].attempts == 1
    assert outcome.failures == []

    quiesce(ring_3)
    assert ring_3.active_ids() == [1, 5, 7, 9]
    assert ring_3.nodes[7].successor == 9


def test_join_fails_once_its_retries_are_used_up(ring_3):
    # Setup
    step(ring_3, [event(Action.JOIN, "P7", id=7, via=1)])
    ring_3.joining[7].attempts = JOIN_ATTEMPTS
    ring_3.joining[7].inbox.append(
        MessageEnvelope(5, 7, MessageKind.FIND_SUCC_RESP, {"h": 7, "result": None, "hops": 2}, corr=0))

    # Execute
    _, outcome = step(ring_3, [])

    # Verify
    assert ring_3.joining == {}
    assert outcome.failures == ["JoinFailed P7 id=7: successor lookup failed"]
    assert ring_3.hash_assignment.lookup("P7") is None
    assert ring_3.stats.join_failures == 1
