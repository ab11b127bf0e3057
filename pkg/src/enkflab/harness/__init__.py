"""Scenario configs, batch runs, audits and plot-data emission."""
from .config import ExperimentConfig, load_config
from .runner import ScenarioResult, run_scenario

__all__ = ["ExperimentConfig", "load_config", "ScenarioResult", "run_scenario"]
