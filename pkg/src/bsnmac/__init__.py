"""Discrete-event simulator for body sensor network MAC protocols."""

from .network import Network, run_scenario, simulate
from .scenario import Scenario, bundled, bundled_names, load_scenario, parse_scenario

__all__ = [
    "Network",
    "Scenario",
    "bundled",
    "bundled_names",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "simulate",
]
__version__ = "0.1.0"
