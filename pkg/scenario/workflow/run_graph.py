"""
LangGraph implementation of a scenario run.
Defines the run as a directed graph that stops early on error_info.
"""

import logging

from langgraph.graph import END, StateGraph

from .nodes import (
    build_world,
    drain_outstanding,
    drive_events,
    evaluate_checks,
    load_scenario,
    render_trace_text,
)
from .state import ScenarioState

logger = logging.getLogger("chordsim.scenario.workflow")


def continue_or_stop(next_node: str):
    """
    Build the routing function for a conditional edge.

    Args:
        next_node: Node to continue with when the state carries no error

    Returns:
        Routing function returning the next node name or "end"
    """
    def route(state: ScenarioState) -> str:
        if state.get("error_info"):
            logger.warning(f"Stopping scenario run: {state['error_info']}")
            return "end"
        return next_node

    return route


def create_scenario_graph():
    """
    Create the scenario run graph.

    Returns:
        Compiled StateGraph
    """
    graph_builder = StateGraph(ScenarioState)

    graph_builder.add_node("load_scenario", load_scenario)
    graph_builder.add_node("build_world", build_world)
    graph_builder.add_node("drive_events", drive_events)
    graph_builder.add_node("drain_outstanding", drain_outstanding)
    graph_builder.add_node("evaluate_checks", evaluate_checks)
    graph_builder.add_node("render_trace", render_trace_text)

    graph_builder.set_entry_point("load_scenario")

    steps = ["load_scenario", "build_world", "drive_events", "drain_outstanding"]
    for current, following in zip(steps, steps[1:] + ["evaluate_checks"]):
        graph_builder.add_conditional_edges(
            current,
            continue_or_stop(following),
            {following: following, "end": END},
        )
    graph_builder.add_edge("evaluate_checks", "render_trace")
    graph_builder.add_edge("render_trace", END)

    graph = graph_builder.compile()
    logger.debug("Compiled the scenario run graph")
    return graph
