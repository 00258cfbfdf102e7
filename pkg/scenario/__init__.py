"""
Scenario runs for ChordSim: the scenario runner, the fuzz campaign and their tools.
"""

from .base_runner import BaseRunner
from .scenario_runner import ScenarioRunner, run_scenario
from .fuzz_campaign import FuzzCampaign, generate_schedule, run_one

__all__ = [
    "BaseRunner",
    "ScenarioRunner",
    "run_scenario",
    "FuzzCampaign",
    "generate_schedule",
    "run_one",
]
