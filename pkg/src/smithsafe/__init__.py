"""Delay-compensated tracking and barrier-certificate safety for differential-drive robots."""
from .errors import ConfigError, SimulationError
from .config import ScenarioConfig, builtin, load, loads, dumps
from .runner import SimTrace, run_scenario
from .metrics import Metrics, compute_metrics, contour_error
from .export import export_csv

__all__ = [
    "ConfigError",
    "SimulationError",
    "ScenarioConfig",
    "builtin",
    "load",
    "loads",
    "dumps",
    "SimTrace",
    "run_scenario",
    "Metrics",
    "compute_metrics",
    "contour_error",
    "export_csv",
]
__version__ = "0.1.0"
