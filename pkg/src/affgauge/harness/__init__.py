"""Scenario files, check orchestration and reports."""

from .checks import CHECKS, CheckContext, CheckReport, Outcome, exit_code, run_check, run_checks, select
from .report import REPORT_VERSION, emit_report, render
from .scenario import (CheckSpec, Sampling, Scenario, ScenarioError, build_scenario, default_tolerance,
                       load_scenario, parse_scenario)

__all__ = [n for n in dir() if not n.startswith("_")]
