"""Available transfer capability of a two-area AC network with correlated wind."""

from .atc_opf import AtcProblem, assemble
from .config import StudyConfig, load_config
from .grid_model import PowerNetwork, parse_case, solve_base_power_flow
from .pdipm import PdipmSolution, SolverOptions, solve
from .studies import (AtcRunner, StudyResult, run_all, run_capacity_sweep,
                      run_correlation_sweep, run_integration_method_study,
                      run_location_study, run_time_series)
from .turbine_power import FarmSpec, TurbineCurve, farm_output, turbine_output
from .wind_scenarios import build_spatial_correlation, generate_scenarios

__version__ = "0.1.0"

__all__ = [
    "AtcProblem",
    "AtcRunner",
    "FarmSpec",
    "PdipmSolution",
    "PowerNetwork",
    "SolverOptions",
    "StudyConfig",
    "StudyResult",
    "TurbineCurve",
    "assemble",
    "build_spatial_correlation",
    "farm_output",
    "generate_scenarios",
    "load_config",
    "parse_case",
    "run_all",
    "run_capacity_sweep",
    "run_correlation_sweep",
    "run_integration_method_study",
    "run_location_study",
    "run_time_series",
    "solve",
    "solve_base_power_flow",
    "turbine_output",
]
