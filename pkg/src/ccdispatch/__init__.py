"""Chance-constrained microgrid economic dispatch via p-efficient points."""

from .errors import (ConfigError, ConvexityError, DispatchError, InfeasibleError, QuotaError,
                     ScenarioError, StructureError)
from .model import MicrogridConfig, Schedule, build_qp, load_config
from .primal_dual import SolveReport, run
from .scenario import ScenarioSet, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConvexityError", "DispatchError", "InfeasibleError", "QuotaError",
    "ScenarioError", "StructureError", "MicrogridConfig", "Schedule", "build_qp", "load_config",
    "SolveReport", "run", "ScenarioSet", "generate",
]
