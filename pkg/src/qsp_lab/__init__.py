"""
qsp-lab: Numerical laboratory for the quasilinear Schrödinger-Poisson system
"""
from .config import RunConfig, load_config
from .energy import ReducedEnergy, thresholds
from .model import ModelParams, PowerTerm, validate
from .mountain_pass import MountainPassSolver, run
from .phi_solver import PhiSolver, solve_phi
from .radial_grid import Field, RadialGrid, build_uniform

__version__ = "0.1.0"
__all__ = [
    "Field",
    "ModelParams",
    "MountainPassSolver",
    "PhiSolver",
    "PowerTerm",
    "RadialGrid",
    "ReducedEnergy",
    "RunConfig",
    "build_uniform",
    "load_config",
    "run",
    "solve_phi",
    "thresholds",
    "validate",
]
