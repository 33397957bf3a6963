"""Scenario files, experiment drivers and the ``pilotwave`` CLI."""

from .experiments import (COMMANDS, Outcome, compare_conformal, compare_nonrel, ensemble, run_scenario,
                          scan_tachyon)
from .schema import load_scenario, parse_scenario, scenario_schema

__all__ = ["COMMANDS", "Outcome", "compare_conformal", "compare_nonrel", "ensemble", "load_scenario",
           "parse_scenario", "run_scenario", "scan_tachyon", "scenario_schema"]
