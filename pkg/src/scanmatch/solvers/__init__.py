"""Two interchangeable least-squares backends for pose refinement."""

from .core import (
    Algorithm,
    NumericalFailure,
    SolverOptions,
    SolverReport,
    Termination,
    cholesky_solve,
)
from .graph import (
    EdgeKind,
    FixedVertexError,
    Graph,
    GraphEdge,
    PoseVertex,
    edge_error_and_jacobian,
    graph_optimize,
    vertex_oplus,
)
from .residual import LeastSquaresProblem, linearize, solve_residual_blocks

__all__ = [
    "Algorithm",
    "EdgeKind",
    "FixedVertexError",
    "Graph",
    "GraphEdge",
    "LeastSquaresProblem",
    "NumericalFailure",
    "PoseVertex",
    "SolverOptions",
    "SolverReport",
    "Termination",
    "cholesky_solve",
    "edge_error_and_jacobian",
    "graph_optimize",
    "linearize",
    "solve_residual_blocks",
    "vertex_oplus",
]
