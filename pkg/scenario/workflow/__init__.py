"""
Workflow components for scenario runs.
This package contains the LangGraph workflow that drives one scenario.
"""

from .state import ScenarioState
from .run_graph import create_scenario_graph
from .nodes import (
    load_scenario,
    build_world,
    drive_events,
    drain_outstanding,
    evaluate_checks,
    render_trace_text,
)

__all__ = [
    "create_scenario_graph",
    "ScenarioState",
    "load_scenario",
    "build_world",
    "drive_events",
    "drain_outstanding",
    "evaluate_checks",
    "render_trace_text",
]
