"""
Base class for the scenario runner and the fuzz campaign.
"""

import logging
import time
from abc import ABC, abstractmethod
from datetime import datetime
from typing import Any, Dict, Optional


class BaseRunner(ABC):
    """
    A named runner with its configuration and a `chordsim.runner.<name>` logger.
    `run` wraps `process` with status, run counters and timing.
    """

    def __init__(self, name: str, config: Optional[Dict[str, Any]] = None):
        """
        Initialize the runner.

        Args:
            name: Runner identifier, also the last part of the logger name
            config: Runner configuration
        """
        self.name = name
        self.config = dict(config or {})
        self.logger = logging.getLogger(f"chordsim.runner.{name}")

        self.state: Dict[str, Any] = {
            "status": "initialized",
            "last_run": None,
            "runs_started": 0,
            "runs_failed": 0,
            "last_exit_status": None,
            "last_duration_seconds": None,
            "metrics": {},
        }

    @abstractmethod
    async def process(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Do one run.

        Args:
            input_data: Run parameters

        Returns:
            Run result, with `exit_status` when the run has one
        """

    async def run(self, input_data: Dict[str, Any]) -> Dict[str, Any]:
        """
        Run `process` and keep the runner state current.

        Args:
            input_data: Run parameters

        Returns:
            The result of `process`

        Raises:
            Exception: Whatever `process` raised, after the failure is counted
        """
        self.state["status"] = "running"
        self.state["last_run"] = datetime.now().isoformat()
        self.state["runs_started"] += 1
        self.logger.info(f"Runner {self.name} starting run {self.state['runs_started']}")
        started = time.perf_counter()

        try:
            result = await self.process(input_data)
        except Exception as e:
            self.state["status"] = "error"
            self.state["runs_failed"] += 1
            self.logger.error(f"Runner {self.name} failed: {e}")
            raise
        finally:
            self.state["last_duration_seconds"] = round(time.perf_counter() - started, 3)

        self.state["status"] = "completed"
        self.state["last_exit_status"] = result.get("exit_status")
        self.logger.info(f"Runner {self.name} completed in {self.state['last_duration_seconds']}s")
        return result

    def get_state(self) -> Dict[str, Any]:
        return self.state
