"""Scenario files, reports and the ``measurenet`` command."""

from .main import main
from .scenario import ScenarioError, ScenarioFile, emit_scenario, parse_scenario, parse_text

__all__ = ["main", "ScenarioError", "ScenarioFile", "emit_scenario", "parse_scenario", "parse_text"]
