"""
Tools for scenario runs: parsing, driving, trace rendering and golden matching.
"""

from .parser import Scenario, parse_scenario, render_scenario
from .driver import ScenarioDriver, EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG, EXIT_NOT_CONVERGED
from .trace_formatter import TraceRecord, TraceRow, render_trace
from .golden import GoldenTable, parse_golden, match_golden

__all__ = [
    "Scenario",
    "parse_scenario",
    "render_scenario",
    "ScenarioDriver",
    "EXIT_OK",
    "EXIT_ASSERTION",
    "EXIT_CONFIG",
    "EXIT_NOT_CONVERGED",
    "TraceRecord",
    "TraceRow",
    "render_trace",
    "GoldenTable",
    "parse_golden",
    "match_golden",
]
