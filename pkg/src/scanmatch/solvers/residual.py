"""Residual-block backend: one small parameter vector, dense normal equations.

Blocks are callables mapping a parameter sequence to a list of residuals.
Jacobians come from evaluating every block once at jet-seeded parameters.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..autodiff import Jet3, jet_variable
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

Block = Callable[[Sequence], list]

INITIAL_LAMBDA = 1e-4
ACCEPT_FACTOR = 0.5
REJECT_FACTOR = 4.0
_MIN_DIAGONAL = 1e-6


@dataclass
class LeastSquaresProblem:
    """Parameters (1 to 3 of them) plus the residual blocks constraining them.

    ``angle_index`` marks a parameter that is re-wrapped into [-pi, pi)
    after every update; :meth:`from_pose` sets it to the heading.
    """

    parameters: Sequence[float]
    blocks: list = field(default_factory=list)
    angle_index: int | None = None

    def __post_init__(self) -> None:
        self.parameters = tuple(float(p) for p in self.parameters)
        if not 1 <= len(self.parameters) <= 3:
            raise ValueError("the residual backend handles 1 to 3 parameters")
        if not self.blocks:
            raise ValueError("a problem needs at least one residual block")

    @classmethod
    def from_pose(cls, pose: Pose2D, blocks) -> "LeastSquaresProblem":
        return cls(tuple(pose), list(blocks), angle_index=2)

    @property
    def is_pose(self) -> bool:
        return self.angle_index == 2 and len(self.parameters) == 3


def linearize(blocks, params) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector and Jacobian at ``params`` by forward-mode seeding."""
    n = len(params)
    seeded = [jet_variable(p, k) for k, p in enumerate(params)]
    values = []
    rows = []
    for block in blocks:
        for r in block(seeded):
            if isinstance(r, Jet3):
                values.append(r.a)
                rows.append((r.d0, r.d1, r.d2))
            else:
                values.append(float(r))
                rows.append((0.0, 0.0, 0.0))
    if not values:
        raise ValueError("residual blocks produced no residuals")
    return np.array(values), np.array(rows)[:, :n]


def _normal_equations(blocks, params):
    """Cost, ``J^T J`` and ``J^T r`` at ``params`` as plain nested lists."""
    n = len(params)
    seeded = [jet_variable(p, k) for k, p in enumerate(params)]
    H = [[0.0] * n for _ in range(n)]
    g = [0.0] * n
    cost = 0.0
    for block in blocks:
        cost += accumulate_normal_equations(block(seeded), n, H, g)
    return cost, H, g


def _step(params, delta, angle_index):
    out = [p + d for p, d in zip(params, delta)]
    if angle_index is not None:
        out[angle_index] = normalize_angle(out[angle_index])
    return tuple(out)


def _damped(H, lam):
    A = [row[:] for row in H]
    for a, row in enumerate(A):
        row[a] += lam * min(max(H[a][a], _MIN_DIAGONAL), MAX_LM_LAMBDA)
    return A


def solve_residual_blocks(problem: LeastSquaresProblem, options: SolverOptions | None = None):
    """Minimise the summed squared residuals of ``problem``.

    Returns ``(solution, report)``; the solution is a :class:`Pose2D` for
    pose problems and a parameter array otherwise.
    """
    options = options or SolverOptions()
    lam, accept_factor, reject_factor = options.damping(
        INITIAL_LAMBDA, ACCEPT_FACTOR, REJECT_FACTOR)
    use_lm = options.algorithm is Algorithm.LEVENBERG_MARQUARDT
    blocks, angle_index = problem.blocks, problem.angle_index

    start = time.perf_counter()
    x = problem.parameters
    cost, H, g = _normal_equations(blocks, x)
    initial_cost = cost
    iterations = 0
    termination = None
    if not math.isfinite(cost):
        termination = Termination.NUMERICAL_FAILURE

    while termination is None:
        if max(abs(v) for v in g) <= options.gradient_tolerance:
            termination = Termination.CONVERGED
            break
        if iterations >= options.max_iterations:
            termination = Termination.MAX_ITERATIONS
            break
        iterations += 1
        try:
            delta = solve_spd(_damped(H, lam) if use_lm else H, [-v for v in g])
        except NumericalFailure:
            if not use_lm:
                termination = Termination.NUMERICAL_FAILURE
                break
            lam *= reject_factor
            if lam > MAX_LM_LAMBDA:
                termination = Termination.NUMERICAL_FAILURE
            continue

        if math.sqrt(sum(d * d for d in delta)) <= options.parameter_tolerance:
            termination = Termination.CONVERGED
            break
        candidate = _step(x, delta, angle_index)
        # Score the step on cost alone; only accepted steps are relinearised.
        new_cost = sum(r * r for block in blocks for r in block(candidate))

        if use_lm and not new_cost < cost:
            # Rejected: keep x untouched and damp harder.
            lam *= reject_factor
            if lam > MAX_LM_LAMBDA:
                termination = Termination.NUMERICAL_FAILURE
            continue
        if not math.isfinite(new_cost):
            termination = Termination.NUMERICAL_FAILURE
            break

        previous_cost = cost
        x = candidate
        cost, H, g = _normal_equations(blocks, x)
        lam *= accept_factor
        if abs(previous_cost - cost) <= options.function_tolerance * cost:
            termination = Termination.CONVERGED

    report = SolverReport(
        iterations=iterations,
        initial_cost=initial_cost,
        final_cost=cost,
        wall_time_us=(time.perf_counter() - start) * 1e6,
        termination=termination,
        gradient_norm=max(abs(v) for v in g),
        linear_solves=iterations,
    )
    solution = Pose2D(*x) if problem.is_pose else np.array(x)
    return solution, report
