"""
State definition for the scenario run workflow.
"""

from typing import Any, Dict, List, Optional, TypedDict

from ..tools.driver import ScenarioDriver
from ..tools.parser import Scenario


class ScenarioState(TypedDict, total=False):
    """
    Represents the state of one scenario run.
    Keys are updated as the graph progresses.
    """
    # Input data for the workflow run
    input_data: Dict[str, Any]

    # Intermediate state data
    config: Dict[str, Any]
    scenario: Scenario
    driver: ScenarioDriver

    # Final output
    assertions: List[str]
    violations: List[str]
    trace_text: str
    exit_status: int

    # Error tracking
    error_info: Optional[str]
