import os
import sys

import pytest

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from chord.ring_math import RingConfig
from simulator.events import Action, ScenarioEvent
from simulator.scheduler import new_world, quiesce, step
from simulator.world import RunMode, World

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
SCENARIOS_DIR = os.path.join(PROJECT_ROOT, "scenarios")
GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def event(action: Action, subject=None, **params) -> ScenarioEvent:
    return ScenarioEvent(at=0, action=action, subject=subject, params=params)


def build_ring(ids, m_bits: int = 4, mode: RunMode = RunMode.REGULAR, seed: int = 0) -> World:
    """Start the first id, then join the others one at a time through it, quiescing after each."""
    world = new_world(RingConfig(m_bits=m_bits), mode, seed)
    first, *rest = ids
    step(world, [event(Action.START, f"P{first}", id=first)])
    quiesce(world)
    for node_id in rest:
        step(world, [event(Action.JOIN, f"P{node_id}", id=node_id, via=first)])
        quiesce(world)
    return world


@pytest.fixture
def ring_4():
    """Four evenly spaced nodes on a 16-slot ring."""
    return build_ring([1, 5, 9, 13])


@pytest.fixture
def ring_3():
    return build_ring([1, 5, 9])


@pytest.fixture
def unrestricted_ring_3():
    return build_ring([1, 5, 9], mode=RunMode.UNRESTRICTED)
