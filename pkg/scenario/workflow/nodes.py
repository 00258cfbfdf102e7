"""
Nodes for the scenario run workflow.
"""

import logging
import os
from typing import Any, Dict

from chord.exceptions import ChordSimError, ScenarioParseError
from simulator.world import RunMode
from ..tools.driver import ScenarioDriver
from ..tools.parser import parse_scenario
from ..tools.trace_formatter import render_trace, trace_header
from .state import ScenarioState

logger = logging.getLogger("chordsim.scenario.workflow")


async def load_scenario(state: ScenarioState) -> Dict[str, Any]:
    """
    Read and parse the scenario.

    Args:
        state: Current state

    Returns:
        Updated state with the parsed scenario and the run configuration
    """
    try:
        input_data = state["input_data"]
        path = input_data.get("scenario_path")
        text = input_data.get("scenario_text")
        if text is None:
            if not path or not os.path.exists(path):
                return {"error_info": f"Scenario file not found: {path}"}
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()

        name = input_data.get("name") or path or "scenario"
        scenario = parse_scenario(text, input_data.get("ring_bits"), name=name)

        config = {
            "scenario": name,
            "mode": RunMode(input_data.get("mode", RunMode.REGULAR.value)).value,
            "seed": int(input_data.get("seed", 0)),
            "max_steps": int(input_data.get("max_steps", 2000)),
            "hop_budget_factor": int(input_data.get("hop_budget_factor", 4)),
            "convergence_factor": int(input_data.get("convergence_factor", 8)),
            "verbose_fingers": bool(input_data.get("verbose_fingers", False)),
        }
        logger.info(f"Loaded scenario {name} with {len(scenario.events)} events, M={scenario.ring_bits}")
        return {"scenario": scenario, "config": config}

    except ScenarioParseError as e:
        logger.error(f"Scenario parse error: {e}")
        return {"error_info": f"Parse error at {e}"}
    except ValueError as e:
        logger.error(f"Bad run configuration: {e}")
        return {"error_info": f"Configuration error: {e}"}


async def build_world(state: ScenarioState) -> Dict[str, Any]:
    """Create the driver and its empty world."""
    try:
        if state.get("error_info"):
            return {}
        config = state["config"]
        driver = ScenarioDriver(
            scenario=state["scenario"],
            mode=RunMode(config["mode"]),
            seed=config["seed"],
            max_steps=config["max_steps"],
            hop_budget_factor=config["hop_budget_factor"],
            convergence_factor=config["convergence_factor"],
        )
        return {"driver": driver}

    except ValueError as e:
        logger.error(f"Error building world: {e}", exc_info=True)
        return {"error_info": f"World construction failed: {e}"}


async def drive_events(state: ScenarioState) -> Dict[str, Any]:
    """Run the scenario's events through the simulator."""
    try:
        driver = state["driver"]
        driver.drive_events()
        logger.info(f"Events driven up to step {driver.world.clock}")
        return {}

    except ChordSimError as e:
        # ExplicitIdOccupied and broken invariants mean the scenario cannot be run as written
        logger.error(f"Scenario aborted: {e}", exc_info=True)
        return {"error_info": f"Scenario aborted: {type(e).__name__}: {e}"}


async def drain_outstanding(state: ScenarioState) -> Dict[str, Any]:
    """Let outstanding gets, puts and deferred events finish."""
    try:
        state["driver"].drain_outstanding()
        return {}

    except ChordSimError as e:
        logger.error(f"Error draining requests: {e}", exc_info=True)
        return {"error_info": f"Scenario aborted: {type(e).__name__}: {e}"}


async def evaluate_checks(state: ScenarioState) -> Dict[str, Any]:
    """Collect assertion verdicts, violation reports and the exit status."""
    driver = state["driver"]
    violations = [report.to_line() for report in driver.final_violations()]
    assertions = [result.to_line() for result in driver.assertions]
    exit_status = driver.exit_status()
    logger.info(f"Scenario finished: {len(assertions)} assertions, {len(violations)} violations, "
                f"exit status {exit_status}")
    return {"assertions": assertions, "violations": violations, "exit_status": exit_status}


async def render_trace_text(state: ScenarioState) -> Dict[str, Any]:
    """Render the trace file content."""
    driver = state["driver"]
    config = state["config"]
    header = trace_header(config["scenario"], config["mode"], config["seed"], config["max_steps"])
    footer = [f"# {line}" for line in state.get("assertions", [])]
    footer += [f"# violation {line}" for line in state.get("violations", [])]
    footer += [f"# {failure}" for failure in driver.failures]
    footer.append(f"# exit_status={state['exit_status']}")
    text = render_trace(header, driver.records, config["verbose_fingers"], footer)
    return {"trace_text": text}