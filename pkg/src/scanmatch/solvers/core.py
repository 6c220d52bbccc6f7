"""Options, reports and the dense Cholesky solve shared by both backends."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..autodiff import Jet3


class Algorithm(str, Enum):
    GAUSS_NEWTON = "GaussNewton"
    LEVENBERG_MARQUARDT = "LevenbergMarquardt"


class Termination(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


class NumericalFailure(np.linalg.LinAlgError):
    """The normal equations could not be factorised."""


MAX_LM_LAMBDA = 1e32


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules and damping schedule.

    The three damping fields default to ``None``, meaning "use the
    backend's own schedule"; the residual and graph backends tune
    differently.
    """

    algorithm: Algorithm = Algorithm.LEVENBERG_MARQUARDT
    max_iterations: int = 100
    function_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-10
    parameter_tolerance: float = 1e-12
    initial_lm_lambda: float | None = None
    lambda_accept_factor: float | None = None
    lambda_reject_factor: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be at least 1")
        for name in ("function_tolerance", "gradient_tolerance", "parameter_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.initial_lm_lambda is not None and not self.initial_lm_lambda > 0:
            raise ValueError("initial_lm_lambda must be positive")
        if self.lambda_accept_factor is not None and not 0 < self.lambda_accept_factor < 1:
            raise ValueError("lambda_accept_factor must lie in (0, 1)")
        if self.lambda_reject_factor is not None and not self.lambda_reject_factor > 1:
            raise ValueError("lambda_reject_factor must exceed 1")

    def damping(self, initial: float, accept: float, reject: float) -> tuple[float, float, float]:
        """Resolve the damping schedule against backend defaults."""
        return (initial if self.initial_lm_lambda is None else self.initial_lm_lambda,
                accept if self.lambda_accept_factor is None else self.lambda_accept_factor,
                reject if self.lambda_reject_factor is None else self.lambda_reject_factor)


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    initial_cost: float
    final_cost: float
    wall_time_us: float
    termination: Termination
    gradient_norm: float = math.nan  # max |J^T r| at the returned estimate
    linear_solves: int = 0

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED


def accumulate_normal_equations(residuals, n: int, H, g) -> float:
    """Add ``J^T J`` and ``J^T r`` of jet residuals into ``H`` and ``g`` in place.

    Only the first ``n`` derivative slots are used. Plain floats count as
    constant residuals. Returns the summed squared residual values.
    """
    if n == 3:
        return _accumulate3(residuals, H, g)
    cost = 0.0
    for e in residuals:
        if not isinstance(e, Jet3):
            e = float(e)
            cost += e * e
            continue
        r, j = e.a, (e.d0, e.d1, e.d2)
        cost += r * r
        for a in range(n):
            ja = j[a]
            if ja == 0.0:
                continue
            g[a] += ja * r
            Ha = H[a]
            for b in range(n):
                Ha[b] += ja * j[b]
    return cost


def _accumulate3(residuals, H, g) -> float:
    # Unrolled three-parameter case; the hot path of every pose solve.
    cost = h00 = h01 = h02 = h11 = h12 = h22 = g0 = g1 = g2 = 0.0
    for e in residuals:
        if not isinstance(e, Jet3):
            e = float(e)
            cost += e * e
            continue
        r, j0, j1, j2 = e.a, e.d0, e.d1, e.d2
        cost += r * r
        g0 += j0 * r
        g1 += j1 * r
        g2 += j2 * r
        h00 += j0 * j0
        h01 += j0 * j1
        h02 += j0 * j2
        h11 += j1 * j1
        h12 += j1 * j2
        h22 += j2 * j2
    H0, H1, H2 = H
    H0[0] += h00
    H0[1] += h01
    H0[2] += h02
    H1[0] += h01
    H1[1] += h11
    H1[2] += h12
    H2[0] += h02
    H2[1] += h12
    H2[2] += h22
    g[0] += g0
    g[1] += g1
    g[2] += g2
    return cost


def solve_spd(a, b) -> list:
    """Cholesky solve on nested lists; the core of :func:`cholesky_solve`."""
    n = len(b)
    L = [[0.0] * n for _ in range(n)]
    for j in range(n):
        Lj = L[j]
        s = a[j][j]
        for k in range(j):
            s -= Lj[k] * Lj[k]
        if not s > 0.0 or s == math.inf:
            raise NumericalFailure(f"non-positive pivot {s!r} at column {j}")
        d = math.sqrt(s)
        Lj[j] = d
        for i in range(j + 1, n):
            Li = L[i]
            t = a[i][j]
            for k in range(j):
                t -= Li[k] * Lj[k]
            Li[j] = t / d
    # L y = b, then L^T x = y
    y = [0.0] * n
    for i in range(n):
        Li = L[i]
        t = b[i]
        for k in range(i):
            t -= Li[k] * y[k]
        y[i] = t / Li[i]
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        t = y[i]
        for k in range(i + 1, n):
            t -= L[k][i] * x[k]
        x[i] = t / L[i][i]
    return x


def cholesky_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` via ``L L^T``.

    Raises :class:`NumericalFailure` on a non-positive (or non-finite) pivot.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n = len(b)
    if A.shape != (n, n):
        raise ValueError(f"shape mismatch: A is {A.shape}, b has {n} entries")
    return np.array(solve_spd(A.tolist(), b.tolist()))
