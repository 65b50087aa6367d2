"""heatlab: pseudospectral simulation and inequality verification for the
L2-critical semilinear heat equation with rough radial data on a periodic box."""

from .dyadic import DyadicProjector, bernstein_ratio, mismatch_ratio, project
from .estimates import FitResult, decay_fit, fit_power_law, strichartz_ratio
from .flow import CutoffSchedule, SolverConfig, Trajectory, evolve, evolve_split, linear_propagate
from .initial_data import CutoffProfile, RoughDataSpec, decompose, mismatch_leak, sample_rough_radial
from .spectral import Field, Grid, fractional_laplacian, lebesgue_norm, sobolev_norm, to_physical, to_spectral

__version__ = "0.1.0"

__all__ = [
    "CutoffProfile",
    "CutoffSchedule",
    "DyadicProjector",
    "Field",
    "FitResult",
    "Grid",
    "RoughDataSpec",
    "SolverConfig",
    "Trajectory",
    "bernstein_ratio",
    "decay_fit",
    "decompose",
    "evolve",
    "evolve_split",
    "fit_power_law",
    "fractional_laplacian",
    "lebesgue_norm",
    "linear_propagate",
    "mismatch_leak",
    "mismatch_ratio",
    "project",
    "sample_rough_radial",
    "sobolev_norm",
    "strichartz_ratio",
    "to_physical",
    "to_spectral",
]
