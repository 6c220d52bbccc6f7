"""Scan-to-map matching: build the three constraints and run one backend."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator

from .costs import (
    DEFAULT_OCCUPIED_WEIGHT,
    DEFAULT_ROTATION_WEIGHT,
    DEFAULT_TRANSLATION_WEIGHT,
    ResidualSpec,
    total_cost,
)
from .geometry import Pose2D
from .grid import ProbabilityGrid
from .solvers import (
    EdgeKind,
    Graph,
    GraphEdge,
    LeastSquaresProblem,
    PoseVertex,
    SolverOptions,
    SolverReport,
    graph_optimize,
    solve_residual_blocks,
)
from .validation import check_cloud, check_grid, check_pose, check_weights

DEFAULT_WEIGHTS = (DEFAULT_OCCUPIED_WEIGHT, DEFAULT_TRANSLATION_WEIGHT, DEFAULT_ROTATION_WEIGHT)


class Backend(str, Enum):
    RESIDUAL = "residual"
    GRAPH = "graph"


@dataclass
class MatchRequest:
    target_translation: tuple
    initial_pose: Pose2D
    cloud: np.ndarray
    grid: ProbabilityGrid
    backend: Backend = Backend.RESIDUAL
    weights: tuple = DEFAULT_WEIGHTS
    options: SolverOptions = field(default_factory=SolverOptions)
    normalize: bool = True

    def __post_init__(self) -> None:
        self.backend = Backend(self.backend)
        self.initial_pose = check_pose(self.initial_pose)
        self.cloud = check_cloud(self.cloud)
        self.grid = check_grid(self.grid)
        self.weights = check_weights(self.weights)
        tx, ty = (float(t) for t in self.target_translation)
        self.target_translation = (tx, ty)

    def residual_specs(self) -> list[ResidualSpec]:
        """The three constraints; the rotation target is the initial heading."""
        occupied, translation, rotation = self.weights
        return [
            ResidualSpec.occupied_space(self.cloud, self.grid, occupied, self.normalize),
            ResidualSpec.translation_delta(self.target_translation, translation),
            ResidualSpec.rotation_delta(self.initial_pose.theta, rotation),
        ]

    def cost(self, pose) -> float:
        return total_cost(self.residual_specs(), tuple(pose))


@dataclass(frozen=True)
class MatchResult:
    pose_estimate: Pose2D
    report: SolverReport


def _match_graph(req: MatchRequest) -> MatchResult:
    occupied, translation, rotation = req.weights
    graph = Graph()
    vertex = graph.add_vertex(PoseVertex(0, req.initial_pose))
    graph.add_edge(GraphEdge(EdgeKind.OCCUPIED_SPACE, (0,), (req.cloud, req.grid), occupied,
                             normalize=req.normalize))
    graph.add_edge(GraphEdge(EdgeKind.TRANSLATION_DELTA, (0,), req.target_translation, translation))
    graph.add_edge(GraphEdge(EdgeKind.ROTATION_DELTA, (0,), req.initial_pose.theta, rotation))
    report = graph_optimize(graph, req.options)
    return MatchResult(vertex.estimate, report)


def _match_residual(req: MatchRequest) -> MatchResult:
    problem = LeastSquaresProblem.from_pose(req.initial_pose, req.residual_specs())
    pose, report = solve_residual_blocks(problem, req.options)
    return MatchResult(pose, report)


def match(req: MatchRequest) -> MatchResult:
    """Refine ``req.initial_pose`` against ``req.grid`` with the chosen backend.

    On numerical failure the best pose seen is returned and the failure is
    recorded in the report's termination field.
    """
    if req.backend is Backend.GRAPH:
        return _match_graph(req)
    return _match_residual(req)


class ScanMatcher(BaseEstimator):
    """Estimator-style front end to :func:`match`.

    ``fit`` takes the map; ``predict`` refines one initial pose per scan.

    Examples
    --------
    >>> matcher = ScanMatcher(backend="graph").fit(grid)     # doctest: +SKIP
    >>> poses = matcher.predict(clouds, initial_poses)         # doctest: +SKIP
    """

    def __init__(self, backend="residual", occupied_weight=DEFAULT_OCCUPIED_WEIGHT,
                 translation_weight=DEFAULT_TRANSLATION_WEIGHT,
                 rotation_weight=DEFAULT_ROTATION_WEIGHT, algorithm="LevenbergMarquardt",
                 max_iterations=100, function_tolerance=1e-10, gradient_tolerance=1e-10,
                 parameter_tolerance=1e-12, initial_lm_lambda=None, normalize=True):
        self.backend = backend
        self.occupied_weight = occupied_weight
        self.translation_weight = translation_weight
        self.rotation_weight = rotation_weight
        self.algorithm = algorithm
        self.max_iterations = max_iterations
        self.function_tolerance = function_tolerance
        self.gradient_tolerance = gradient_tolerance
        self.parameter_tolerance = parameter_tolerance
        self.initial_lm_lambda = initial_lm_lambda
        self.normalize = normalize

    def _options(self) -> SolverOptions:
        return SolverOptions(
            algorithm=self.algorithm,
            max_iterations=self.max_iterations,
            function_tolerance=self.function_tolerance,
            gradient_tolerance=self.gradient_tolerance,
            parameter_tolerance=self.parameter_tolerance,
            initial_lm_lambda=self.initial_lm_lambda,
        )

    def fit(self, grid, y=None):
        self.grid_ = check_grid(grid)
        Backend(self.backend)
        check_weights((self.occupied_weight, self.translation_weight, self.rotation_weight))
        self._options()
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "grid_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("call fit(grid) before matching scans")

    def match(self, cloud, initial_pose, target_translation=None) -> MatchResult:
        """Match a single scan; the translation target defaults to the initial pose's."""
        self._check_fitted()
        initial_pose = check_pose(initial_pose)
        if target_translation is None:
            target_translation = (initial_pose.x, initial_pose.y)
        req = MatchRequest(
            target_translation=target_translation,
            initial_pose=initial_pose,
            cloud=cloud,
            grid=self.grid_,
            backend=self.backend,
            weights=(self.occupied_weight, self.translation_weight, self.rotation_weight),
            options=self._options(),
            normalize=self.normalize,
        )
        return match(req)

    def predict(self, clouds, initial_poses, target_translations=None) -> np.ndarray:
        """Refined ``(x, y, theta)`` rows, one per scan.

        Per-scan reports are kept in ``reports_``.
        """
        self._check_fitted()
        initial_poses = list(initial_poses)
        if len(clouds) != len(initial_poses):
            raise ValueError("need one initial pose per cloud")
        if target_translations is None:
            target_translations = [None] * len(clouds)
        elif len(target_translations) != len(clouds):
            raise ValueError("need one target translation per cloud")
        results = [self.match(c, p, t)
                   for c, p, t in zip(clouds, initial_poses, target_translations)]
        self.reports_ = [r.report for r in results]
        return np.array([r.pose_estimate.as_array() for r in results]).reshape(-1, 3)
