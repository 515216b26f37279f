"""Declarative scenario files, their runners and result bundles."""
from histories_sim.scenarios.catalog import CatalogEntry, bundled_scenario, list_scenarios
from histories_sim.scenarios.results import ResultBundle, ResultWriter, Table
from histories_sim.scenarios.runners import ScenarioRunner, run_scenario
from histories_sim.scenarios.schema import KINDS, Scenario, load_scenario, parse_scenario_text, validate_scenario

__all__ = [
    "KINDS",
    "CatalogEntry",
    "ResultBundle",
    "ResultWriter",
    "Scenario",
    "ScenarioRunner",
    "Table",
    "bundled_scenario",
    "list_scenarios",
    "load_scenario",
    "parse_scenario_text",
    "run_scenario",
    "validate_scenario",
]
