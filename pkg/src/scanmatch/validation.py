"""Input checks shared by the matcher, the estimator and the CLIs."""

from __future__ import annotations

import numpy as np

from .geometry import Pose2D
from .grid import ProbabilityGrid


def check_cloud(cloud, allow_empty: bool = False) -> np.ndarray:
    """Return ``cloud`` as a finite ``(n, 2)`` float array."""
    arr = np.asarray(cloud, dtype=float)
    if arr.size == 0:
        if allow_empty:
            return arr.reshape(0, 2)
        raise ValueError("point cloud is empty")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"point cloud must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point cloud contains non-finite coordinates")
    return arr


def check_pose(pose) -> Pose2D:
    if isinstance(pose, Pose2D):
        return pose
    values = np.asarray(pose, dtype=float).reshape(-1)
    if values.shape != (3,) or not np.all(np.isfinite(values)):
        raise ValueError(f"pose must be three finite numbers, got {pose!r}")
    return Pose2D(*values)


def check_grid(grid, min_cells: int = 4) -> ProbabilityGrid:
    if not isinstance(grid, ProbabilityGrid):
        raise TypeError(f"expected a ProbabilityGrid, got {type(grid).__name__}")
    if grid.width < min_cells or grid.height < min_cells:
        raise ValueError(f"grid must be at least {min_cells}x{min_cells} cells, "
                         f"got {grid.width}x{grid.height}")
    return grid


def check_weights(weights) -> tuple[float, float, float]:
    occupied, translation, rotation = (float(w) for w in weights)
    if min(occupied, translation, rotation) < 0 or not np.all(
            np.isfinite([occupied, translation, rotation])):
        raise ValueError(f"weights must be finite and non-negative, got {weights!r}")
    return occupied, translation, rotation
