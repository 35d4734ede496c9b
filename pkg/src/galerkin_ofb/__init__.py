"""Spectral-Galerkin design and simulation of observer-based boundary
output-feedback control for semilinear parabolic equations on rectangles."""

from .config import RunConfig, load_config
from .lifting import LiftingSystem, build_lifting, dirichlet_coefficient, lift_field
from .sensors import SensorPartition, equidistant_partition, minimal_sensor_lines
from .simulation import make_nonlinearity, simulate_scenario
from .spectral import Rectangle, SpectralBasis, enumerate_modes
from .synthesis import ControllerDesign, design_controller, find_min_N, scaling_sweep

__all__ = [
    "ControllerDesign", "LiftingSystem", "Rectangle", "RunConfig", "SensorPartition",
    "SpectralBasis", "build_lifting", "design_controller", "dirichlet_coefficient",
    "enumerate_modes", "equidistant_partition", "find_min_N", "lift_field", "load_config",
    "make_nonlinearity", "minimal_sensor_lines", "scaling_sweep", "simulate_scenario",
]
__version__ = "0.1.0"
