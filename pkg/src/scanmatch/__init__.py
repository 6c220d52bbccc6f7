"""2D scan matching against probability grids with two least-squares backends."""

from .autodiff import DomainError, Jet3, jet_constant, jet_variable
from .costs import (
    ResidualKind,
    ResidualSpec,
    occupied_space_residuals,
    rotation_delta_residual,
    total_cost,
    translation_delta_residual,
)
from .geometry import Pose2D, normalize_angle, transform_point
from .grid import ProbabilityGrid, grid_from_pointcloud, grid_insert_scan, grid_interpolate
from .matcher import Backend, MatchRequest, MatchResult, ScanMatcher, match
from .solvers import SolverOptions, SolverReport, Termination

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "DomainError",
    "Jet3",
    "MatchRequest",
    "MatchResult",
    "Pose2D",
    "ProbabilityGrid",
    "ResidualKind",
    "ResidualSpec",
    "ScanMatcher",
    "SolverOptions",
    "SolverReport",
    "Termination",
    "grid_from_pointcloud",
    "grid_insert_scan",
    "grid_interpolate",
    "jet_constant",
    "jet_variable",
    "match",
    "normalize_angle",
    "occupied_space_residuals",
    "rotation_delta_residual",
    "total_cost",
    "transform_point",
    "translation_delta_residual",
]
