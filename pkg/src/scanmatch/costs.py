"""The three scan-matching constraints shared by both solver backends.

Every residual function takes the pose as an ``(x, y, theta)`` triple whose
entries may be floats or :class:`~scanmatch.autodiff.Jet3`, so the same code
yields residual values and, with seeded jets, their Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numba
import numpy as np

from .autodiff import Jet3, _jet, cos, sin
from .geometry import normalize_angle
from .grid import ProbabilityGrid, _bicubic

DEFAULT_OCCUPIED_WEIGHT = 10.0
DEFAULT_TRANSLATION_WEIGHT = 10.0
DEFAULT_ROTATION_WEIGHT = 40.0


class ResidualKind(str, Enum):
    OCCUPIED_SPACE = "OccupiedSpace"
    TRANSLATION_DELTA = "TranslationDelta"
    ROTATION_DELTA = "RotationDelta"


def _parts(v) -> tuple[float, float, float, float]:
    if isinstance(v, Jet3):
        return (v.a, v.d0, v.d1, v.d2)
    return (float(v), 0.0, 0.0, 0.0)


@numba.njit(cache=True)
def _occupied_kernel(cells, ox, oy, res, pts, pose, scale):
    # pose rows are x, y, cos(theta), sin(theta), each as (value, d0, d1, d2).
    n = pts.shape[0]
    out = np.empty((n, 4))
    wx = np.empty(4)
    wy = np.empty(4)
    for k in range(n):
        px = pts[k, 0]
        py = pts[k, 1]
        for m in range(4):
            wx[m] = pose[2, m] * px - pose[3, m] * py + pose[0, m]
            wy[m] = pose[3, m] * px + pose[2, m] * py + pose[1, m]
        p, gx, gy = _bicubic(cells, ox, oy, res, wx[0], wy[0])
        out[k, 0] = scale * (1.0 - p)
        for m in range(1, 4):
            out[k, m] = -scale * (gx * wx[m] + gy * wy[m])
    return out


def occupied_space_residuals(pose, cloud, grid: ProbabilityGrid, weight: float,
                             normalize: bool = True) -> list:
    """``weight/sqrt(n) * (1 - p)`` for each scan point mapped through ``pose``.

    With ``normalize=False`` the ``1/sqrt(n)`` factor is dropped. Jet poses
    give jet residuals; the per-point derivative propagation runs compiled.
    """
    pts = np.asarray(cloud, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("occupied-space residuals need a non-empty cloud")
    scale = weight / math.sqrt(n) if normalize else float(weight)
    x, y, theta = pose
    table = np.array([_parts(x), _parts(y), _parts(cos(theta)), _parts(sin(theta))])
    out = _occupied_kernel(grid._cells, grid._ox, grid._oy, grid.resolution, pts, table,
                           float(scale)).tolist()
    if not any(isinstance(v, Jet3) for v in pose):
        return [row[0] for row in out]
    return [_jet(*row) for row in out]


def warm_up() -> None:
    """Compile (or load from cache) the numba kernels before anything is timed."""
    cells = np.full((4, 4), 0.5)
    _occupied_kernel(cells, 0.0, 0.0, 1.0, np.zeros((1, 2)), np.zeros((4, 4)), 1.0)


def translation_delta_residual(pose, target_translation, weight: float) -> list:
    x, y, _ = pose
    tx, ty = target_translation
    return [weight * (x - tx), weight * (y - ty)]


def rotation_delta_residual(pose, target_rotation: float, weight: float) -> list:
    _, _, theta = pose
    return [weight * normalize_angle(theta - target_rotation)]


@dataclass(frozen=True)
class ResidualSpec:
    """One constraint on a single pose.

    ``target`` is ``(cloud, grid)`` for occupied space, ``(tx, ty)`` for the
    translation delta and a rotation in radians for the rotation delta.
    """

    kind: ResidualKind
    weight: float
    target: Any
    normalize: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ResidualKind(self.kind))
        if not self.weight >= 0:
            raise ValueError(f"residual weight must be non-negative, got {self.weight!r}")
        if self.kind is ResidualKind.OCCUPIED_SPACE:
            cloud, _ = self.target
            if len(cloud) == 0:
                raise ValueError("occupied-space residuals need a non-empty cloud")

    @classmethod
    def occupied_space(cls, cloud, grid: ProbabilityGrid,
                       weight: float = DEFAULT_OCCUPIED_WEIGHT, normalize: bool = True):
        pts = np.array(cloud, dtype=float).reshape(-1, 2)
        pts.flags.writeable = False
        return cls(ResidualKind.OCCUPIED_SPACE, float(weight), (pts, grid), normalize)

    @classmethod
    def translation_delta(cls, target_translation, weight: float = DEFAULT_TRANSLATION_WEIGHT):
        tx, ty = target_translation
        return cls(ResidualKind.TRANSLATION_DELTA, float(weight), (float(tx), float(ty)))

    @classmethod
    def rotation_delta(cls, target_rotation: float, weight: float = DEFAULT_ROTATION_WEIGHT):
        return cls(ResidualKind.ROTATION_DELTA, float(weight), float(target_rotation))

    @property
    def residual_count(self) -> int:
        if self.kind is ResidualKind.OCCUPIED_SPACE:
            return len(self.target[0])
        if self.kind is ResidualKind.TRANSLATION_DELTA:
            return 2
        return 1

    def evaluate(self, pose) -> list:
        if self.kind is ResidualKind.OCCUPIED_SPACE:
            cloud, grid = self.target
            return occupied_space_residuals(pose, cloud, grid, self.weight, self.normalize)
        if self.kind is ResidualKind.TRANSLATION_DELTA:
            return translation_delta_residual(pose, self.target, self.weight)
        return rotation_delta_residual(pose, self.target, self.weight)

    __call__ = evaluate


def total_cost(blocks, pose) -> float:
    """Sum of squared residuals over all blocks."""
    return float(sum(r * r for block in blocks for r in block(pose)))
