"""
Scenario runner implementation using LangGraph.
"""

import os
import uuid
from datetime import datetime
from typing import Any, Dict, Optional

from .base_runner import BaseRunner
from .memory.trace_memory import TraceMemory
from .tools.driver import EXIT_CONFIG
from .tools.trace_formatter import parse_trace_header, split_steps
from .workflow.run_graph import create_scenario_graph
from .workflow.state import ScenarioState


class ScenarioRunner(BaseRunner):
    """
    Runs scenario files through the scenario graph and renders their traces.
    """

    def __init__(self, name: str = "scenario", config: Optional[Dict[str, Any]] = None):
        """
        Initialize the scenario runner.

        Args:
            name: Runner identifier
            config: Configuration parameters, `memory_dir` enables trace memory
        """
        super().__init__(name, config)

        self.graph = create_scenario_graph()
        self.active_runs: Dict[str, Dict[str, Any]] = {}

        memory_dir = self.config.get("memory_dir")
        self.memory = TraceMemory(memory_dir) if memory_dir else None

        self.logger.info("Scenario runner initialized with LangGraph")

    async def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Run one scenario.

        Args:
            input_data: Input data containing:
                - scenario_path or scenario_text: The scenario to run
                - mode, seed, max_steps: Run parameters
                - trace_path: Optional file to write the trace to
                - store: False keeps the run out of trace memory

        Returns:
            Run result with exit_status, trace_text, assertions and violations
        """
        run_input = {**self.config.get("defaults", {}), **input_data}
        self.logger.info(f"Processing scenario {run_input.get('scenario_path') or run_input.get('name', 'scenario')}")

        run_id = str(uuid.uuid4())
        self.active_runs[run_id] = {
            "started_at": datetime.now().isoformat(),
            "status": "running",
            "input": {k: v for k, v in run_input.items() if k != "scenario_text"},
        }

        initial_state: ScenarioState = {"input_data": run_input}
        try:
            final_state = await self.graph.ainvoke(initial_state)
        except Exception as e:
            self.logger.error(f"Error executing scenario workflow: {e}", exc_info=True)
            self.active_runs[run_id].update(status="error", error=str(e))
            return {"run_id": run_id, "exit_status": EXIT_CONFIG, "error": f"Scenario workflow failed: {e}"}

        if final_state.get("error_info"):
            self.logger.error(f"Scenario workflow error: {final_state['error_info']}")
            self.active_runs[run_id].update(status="error", error=final_state["error_info"])
            return {"run_id": run_id, "exit_status": EXIT_CONFIG, "error": final_state["error_info"]}

        driver = final_state["driver"]
        config = final_state["config"]
        result = {
            "run_id": run_id,
            "exit_status": final_state["exit_status"],
            "trace_text": final_state["trace_text"],
            "assertions": final_state.get("assertions", []),
            "violations": final_state.get("violations", []),
            "failures": list(driver.failures),
            "records": driver.records,
            "world": driver.world,
            "driver": driver,
        }

        trace_path = run_input.get("trace_path")
        if self.memory is not None and run_input.get("store", True):
            result["trace_id"] = self.memory.add_trace(
                config["scenario"], config["mode"], config["seed"], config["max_steps"],
                result["trace_text"], result["exit_status"], path=trace_path,
            )
        elif trace_path:
            os.makedirs(os.path.dirname(os.path.abspath(trace_path)), exist_ok=True)
            with open(trace_path, "w", encoding="utf-8") as f:
                f.write(result["trace_text"])
            self.logger.info(f"Trace written to {trace_path}")

        self.active_runs[run_id].update(status="completed", completed_at=datetime.now().isoformat(),
                                        exit_status=result["exit_status"])
        return result

    async def replay(self, trace_ref: str, scenario_path: Optional[str] = None) -> Dict[str, Any]:
        """
        Re-run the scenario a recorded trace came from and compare the traces step by step.

        Traces indexed in trace memory are looked up there by id or path and
        re-run with the parameters the index holds; other traces are read from
        the file and re-run with the parameters in their header.

        Args:
            trace_ref: Trace id or trace file
            scenario_path: Scenario file, defaults to the one the trace names

        Returns:
            Dictionary with `identical`, and `first_difference` when the traces diverge
        """
        entry = self.memory.resolve(trace_ref) if self.memory is not None else None
        if entry is not None:
            recorded = self.memory.get_trace(entry["trace_id"])
            if recorded is None:
                raise FileNotFoundError(f"Trace {entry['trace_id']} is indexed but {entry['path']} is gone")
            header = {k: entry[k] for k in ("scenario", "mode", "seed", "max_steps")}
        else:
            with open(trace_ref, "r", encoding="utf-8") as f:
                recorded = f.read()
            header = parse_trace_header(recorded.splitlines()[0])

        result = await self.process({
            "scenario_path": scenario_path or header["scenario"],
            "name": header["scenario"],
            "mode": header["mode"],
            "seed": int(header["seed"]),
            "max_steps": int(header["max_steps"]),
            "verbose_fingers": " finger=" in recorded,
            "store": False,
        })
        if "error" in result:
            return {"identical": False, "error": result["error"], "exit_status": result["exit_status"]}

        verdict: Dict[str, Any] = {"exit_status": result["exit_status"]}
        if entry is not None:
            verdict["trace_id"] = entry["trace_id"]
            verdict["digest_matches"] = self.memory.digest(recorded) == entry["digest"]

        before, after = split_steps(recorded), split_steps(result["trace_text"])
        for step_number in sorted(set(before) | set(after)):
            if before.get(step_number) != after.get(step_number):
                self.logger.warning(f"Replay of {trace_ref} diverges at step {step_number}")
                return {
                    **verdict,
                    "identical": False,
                    "first_difference": step_number,
                    "recorded": before.get(step_number, ""),
                    "replayed": after.get(step_number, ""),
                }
        self.logger.info(f"Replay of {trace_ref} matches over {len(before)} steps")
        return {**verdict, "identical": True, "steps": len(before)}

    async def get_run_status(self, run_id: str) -> Dict[str, Any]:
        if run_id not in self.active_runs:
            return {"error": f"Run ID {run_id} not found"}
        return self.active_runs[run_id]

    async def list_runs(self) -> Dict[str, Dict[str, Any]]:
        return self.active_runs


async def run_scenario(scenario_path: Optional[str] = None, scenario_text: Optional[str] = None,
                       **options: Any) -> Dict[str, Any]:
    """
    Run one scenario with a fresh runner.

    Args:
        scenario_path: Scenario file
        scenario_text: Scenario content, used instead of the file when given
        **options: mode, seed, max_steps and the other run parameters

    Returns:
        Run result from ScenarioRunner.process
    """
    runner = ScenarioRunner()
    input_data = dict(options)
    if scenario_path is not None:
        input_data["scenario_path"] = scenario_path
    if scenario_text is not None:
        input_data["scenario_text"] = scenario_text
    return await runner.run(input_data)
