"""Vertex/edge backend in the style of a graph optimiser.

Pose vertices own their estimates and are updated through :func:`vertex_oplus`.
Edges compute their own error and per-vertex Jacobians. The optimiser
stacks all edges over the free vertices and runs Levenberg-Marquardt on
the resulting ``3 * n_free`` system.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from ..autodiff import Jet3, cos, jet_variable, sin
from ..costs import (
    ResidualKind,
    occupied_space_residuals,
    rotation_delta_residual,
    translation_delta_residual,
)
from ..geometry import Pose2D, normalize_angle
from .core import (
    MAX_LM_LAMBDA,
    Algorithm,
    NumericalFailure,
    SolverOptions,
    SolverReport,
    Termination,
    accumulate_normal_equations,
    solve_spd,
)

INITIAL_LAMBDA = 1e-3
ACCEPT_FACTOR = 1.0 / 3.0
REJECT_FACTOR = 2.0


class FixedVertexError(RuntimeError):
    """An update was applied to a vertex marked fixed."""


class EdgeKind(str, Enum):
    OCCUPIED_SPACE = ResidualKind.OCCUPIED_SPACE.value
    TRANSLATION_DELTA = ResidualKind.TRANSLATION_DELTA.value
    ROTATION_DELTA = ResidualKind.ROTATION_DELTA.value
    RELATIVE_POSE = "RelativePose"


_ARITY = {
    EdgeKind.OCCUPIED_SPACE: 1,
    EdgeKind.TRANSLATION_DELTA: 1,
    EdgeKind.ROTATION_DELTA: 1,
    EdgeKind.RELATIVE_POSE: 2,
}


@dataclass
class PoseVertex:
    id: int
    estimate: Pose2D
    fixed: bool = False


def vertex_oplus(v: PoseVertex, delta) -> PoseVertex:
    """Add ``delta`` to the estimate in place (heading re-wrapped); returns ``v``."""
    if v.fixed:
        raise FixedVertexError(f"vertex {v.id} is fixed")
    dx, dy, dtheta = (float(d) for d in delta)
    e = v.estimate
    v.estimate = Pose2D(e.x + dx, e.y + dy, e.theta + dtheta)
    return v


@dataclass
class GraphEdge:
    """A constraint over one or two pose vertices.

    ``measurement`` holds ``(cloud, grid)`` for occupied space, ``(tx, ty)``
    for the translation delta, a heading for the rotation delta and a
    :class:`Pose2D` (pose of the second vertex seen from the first) for
    relative-pose edges. ``information_weight`` scales the error.
    """

    kind: EdgeKind
    vertex_ids: tuple
    measurement: Any
    information_weight: float = 1.0
    normalize: bool = True

    def __post_init__(self) -> None:
        self.kind = EdgeKind(self.kind)
        self.vertex_ids = tuple(int(i) for i in self.vertex_ids)
        if len(self.vertex_ids) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind.value} edges connect {_ARITY[self.kind]} vertices")
        if not self.information_weight >= 0:
            raise ValueError("information_weight must be non-negative")
        if self.kind is EdgeKind.OCCUPIED_SPACE:
            cloud, grid = self.measurement
            cloud = np.array(cloud, dtype=float).reshape(-1, 2)
            cloud.flags.writeable = False
            self.measurement = (cloud, grid)
            if len(cloud) == 0:
                raise ValueError("occupied-space edges need a non-empty cloud")

    @property
    def dimension(self) -> int:
        if self.kind is EdgeKind.OCCUPIED_SPACE:
            return len(self.measurement[0])
        return {EdgeKind.TRANSLATION_DELTA: 2, EdgeKind.ROTATION_DELTA: 1,
                EdgeKind.RELATIVE_POSE: 3}[self.kind]

    def compute_error(self, poses) -> list:
        """Error vector for vertex states ``poses`` (triples, possibly jets)."""
        w = self.information_weight
        if self.kind is EdgeKind.OCCUPIED_SPACE:
            cloud, grid = self.measurement
            return occupied_space_residuals(poses[0], cloud, grid, w, self.normalize)
        if self.kind is EdgeKind.TRANSLATION_DELTA:
            return translation_delta_residual(poses[0], self.measurement, w)
        if self.kind is EdgeKind.ROTATION_DELTA:
            return rotation_delta_residual(poses[0], self.measurement, w)
        (xi, yi, ti), (xj, yj, tj) = poses
        z = self.measurement
        c, s = cos(ti), sin(ti)
        dx, dy = xj - xi, yj - yi
        return [w * (c * dx + s * dy - z.x),
                w * (-s * dx + c * dy - z.y),
                w * normalize_angle(tj - ti - z.theta)]


@dataclass
class Graph:
    vertices: dict = field(default_factory=dict)
    edges: list = field(default_factory=list)

    def add_vertex(self, vertex: PoseVertex) -> PoseVertex:
        if vertex.id in self.vertices:
            raise ValueError(f"duplicate vertex id {vertex.id}")
        self.vertices[vertex.id] = vertex
        return vertex

    def add_edge(self, edge: GraphEdge) -> GraphEdge:
        missing = [i for i in edge.vertex_ids if i not in self.vertices]
        if missing:
            raise ValueError(f"edge references unknown vertices {missing}")
        self.edges.append(edge)
        return edge

    def vertex(self, vid: int) -> PoseVertex:
        return self.vertices[vid]


def _vertex_states(graph: Graph):
    """Float state of every vertex and jet-seeded state of every free one."""
    states, seeded = {}, {}
    for vid, v in graph.vertices.items():
        e = v.estimate
        states[vid] = (e.x, e.y, e.theta)
        if not v.fixed:
            seeded[vid] = (jet_variable(e.x, 0), jet_variable(e.y, 1), jet_variable(e.theta, 2))
    return states, seeded


def _edge_jets(edge: GraphEdge, states: dict, seeded: dict):
    """Per-vertex jet errors of ``edge``; ``None`` stands in for fixed vertices."""
    ids = edge.vertex_ids
    if len(ids) == 1:
        jets = seeded.get(ids[0])
        return [None if jets is None else edge.compute_error((jets,))]
    base = [states[i] for i in ids]
    passes = []
    for k, vid in enumerate(ids):
        if vid not in seeded:
            passes.append(None)
            continue
        pass_states = list(base)
        pass_states[k] = seeded[vid]
        passes.append(edge.compute_error(pass_states))
    return passes


def _row(e) -> tuple[float, float, float]:
    return (e.d0, e.d1, e.d2) if isinstance(e, Jet3) else (0.0, 0.0, 0.0)


def edge_error_and_jacobian(edge: GraphEdge, graph: Graph):
    """Error vector and per-vertex Jacobians (``dimension x 3`` each).

    Each vertex is differentiated in its own pass with the others held
    constant; fixed vertices get ``None``.
    """
    states, seeded = _vertex_states(graph)
    passes = _edge_jets(edge, states, seeded)
    jacobians = [None if errs is None else np.array([_row(e) for e in errs]).reshape(-1, 3)
                 for errs in passes]
    errs = next((p for p in passes if p is not None), None)
    if errs is None:
        errs = edge.compute_error([states[i] for i in edge.vertex_ids])
    error = [e.a if isinstance(e, Jet3) else float(e) for e in errs]
    return np.array(error), jacobians


def _chi2(graph: Graph) -> float:
    states = {vid: (v.estimate.x, v.estimate.y, v.estimate.theta)
              for vid, v in graph.vertices.items()}
    total = 0.0
    for edge in graph.edges:
        for e in edge.compute_error([states[i] for i in edge.vertex_ids]):
            total += e * e
    return total


def _build_system(graph: Graph, index: dict):
    """Normal equations ``H dx = b`` (``b = -J^T e``) and chi2, as nested lists."""
    n = 3 * len(index)
    H = [[0.0] * n for _ in range(n)]
    b = [0.0] * n
    chi2 = 0.0
    states, seeded = _vertex_states(graph)
    for edge in graph.edges:
        passes = _edge_jets(edge, states, seeded)
        live = [(index[vid], errs) for vid, errs in zip(edge.vertex_ids, passes)
                if errs is not None]
        if not live:
            continue
        if len(live) == 1:
            # Unary (or one free end): accumulate straight into the 3x3 block.
            a, errs = live[0]
            block = [[0.0] * 3 for _ in range(3)]
            grad = [0.0] * 3
            chi2 += accumulate_normal_equations(errs, 3, block, grad)
            for r in range(3):
                b[a + r] -= grad[r]
                Hr = H[a + r]
                for c in range(3):
                    Hr[a + c] += block[r][c]
            continue
        error = [e.a if isinstance(e, Jet3) else float(e) for e in live[0][1]]
        chi2 += sum(v * v for v in error)
        rows = [(a, [_row(e) for e in errs]) for a, errs in live]
        for a, Ja in rows:
            for r in range(3):
                b[a + r] -= sum(J[r] * v for J, v in zip(Ja, error))
            for c0, Jc in rows:
                for r in range(3):
                    Hr = H[a + r]
                    for c in range(3):
                        Hr[c0 + c] += sum(u[r] * w[c] for u, w in zip(Ja, Jc))
    return H, b, chi2


def graph_optimize(graph: Graph, options: SolverOptions | None = None) -> SolverReport:
    """Optimise all free vertex estimates in place and report how it went."""
    options = options or SolverOptions()
    free = sorted(vid for vid, v in graph.vertices.items() if not v.fixed)
    if not free:
        raise ValueError("graph has no free vertices to optimise")
    if not graph.edges:
        raise ValueError("graph has no edges")
    index = {vid: 3 * k for k, vid in enumerate(free)}
    lam, accept_factor, reject_factor = options.damping(
        INITIAL_LAMBDA, ACCEPT_FACTOR, REJECT_FACTOR)
    use_lm = options.algorithm is Algorithm.LEVENBERG_MARQUARDT

    start = time.perf_counter()
    H, b, chi2 = _build_system(graph, index)
    initial_chi2 = chi2
    # The initial damping is relative to the largest Hessian diagonal entry.
    lam *= max(max(H[k][k] for k in range(len(b))), 1e-12)
    iterations = 0
    solves = 0
    termination = None
    if not math.isfinite(chi2):
        termination = Termination.NUMERICAL_FAILURE

    while termination is None:
        if max(abs(v) for v in b) <= options.gradient_tolerance:
            termination = Termination.CONVERGED
            break
        if iterations >= options.max_iterations:
            termination = Termination.MAX_ITERATIONS
            break
        iterations += 1
        # One iteration raises the damping until a step lowers the error.
        while True:
            solves += 1
            A = H
            if use_lm:
                A = [row[:] for row in H]
                for k, row in enumerate(A):
                    row[k] += lam
            try:
                dx = solve_spd(A, b)
            except NumericalFailure:
                if not use_lm:
                    termination = Termination.NUMERICAL_FAILURE
                    break
                lam *= reject_factor
                if lam > MAX_LM_LAMBDA:
                    termination = Termination.NUMERICAL_FAILURE
                    break
                continue
            if math.sqrt(sum(d * d for d in dx)) <= options.parameter_tolerance:
                termination = Termination.CONVERGED
                break

            backup = {vid: graph.vertices[vid].estimate for vid in free}
            for vid in free:
                a = index[vid]
                vertex_oplus(graph.vertices[vid], dx[a:a + 3])
            # Score the step on chi2 alone; only accepted steps are relinearised.
            new_chi2 = _chi2(graph)
            if new_chi2 < chi2 or (not use_lm and math.isfinite(new_chi2)):
                break
            for vid, est in backup.items():
                graph.vertices[vid].estimate = est
            if not use_lm:
                termination = Termination.NUMERICAL_FAILURE
                break
            lam *= reject_factor
            if lam > MAX_LM_LAMBDA:
                termination = Termination.NUMERICAL_FAILURE
                break
        if termination is not None:
            break

        previous = chi2
        lam *= accept_factor
        H, b, chi2 = _build_system(graph, index)
        if abs(previous - chi2) <= options.function_tolerance * chi2:
            termination = Termination.CONVERGED

    return SolverReport(
        iterations=iterations,
        initial_cost=initial_chi2,
        final_cost=chi2,
        wall_time_us=(time.perf_counter() - start) * 1e6,
        termination=termination,
        gradient_norm=max(abs(v) for v in b),
        linear_solves=solves,
    )
