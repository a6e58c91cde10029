"""loadcycle: deterministic wheel-loader short-loading-cycle simulation.

A planar machine model (engine, torque converter, driveline, linkage,
hydraulics), a gravel pile with a resistive digging force, and a rule-based
operator that drives a complete bucket-fill / haul / dump cycle using only
human-sensible signals and human-available controls.
"""

from .config import build_sim_config, load_sim_config, reference_config
from .errors import ConfigError, SimulationFault
from .sim import CycleLog, Metrics, SimConfig, compare_runs, compute_metrics, run_cycle

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "SimulationFault",
    "SimConfig", "CycleLog", "Metrics",
    "run_cycle", "compute_metrics", "compare_runs",
    "reference_config", "build_sim_config", "load_sim_config",
    "__version__",
]
