"""Discrete-event MANET simulator comparing stability, load and battery aware routing."""

from .config import ConfigError, Scenario, SweepGrid, load_grid, load_scenario, parse_grid, parse_scenario
from .engine import Simulator, run
from .metrics import MetricsReport
from .routing import Policy

__all__ = [
    "ConfigError",
    "MetricsReport",
    "Policy",
    "Scenario",
    "Simulator",
    "SweepGrid",
    "load_grid",
    "load_scenario",
    "parse_grid",
    "parse_scenario",
    "run",
]
__version__ = "0.1.0"
