"""Probability grid with a C1 bicubic lookup, plus two ways to fill it.

Cell ``(ix, iy)`` covers ``[ox + ix*res, ox + (ix+1)*res) x [oy + iy*res, ...)``
where ``(ox, oy)`` is ``origin``; its value is attached to the cell center.
``cells`` is indexed ``[iy, ix]`` with ``iy`` growing along +y.
"""

from __future__ import annotations

import math

import numba
import numpy as np
from skimage.draw import line as _bresenham

from .autodiff import Jet3, _jet
from .geometry import Pose2D, transform_points

BACKGROUND_PROBABILITY = 0.1
PEAK_PROBABILITY = 0.9
SPLAT_SIGMA_CELLS = 1.5
SPLAT_TRUNCATION_SIGMAS = 4.0

HIT_ODDS = 1.5
MISS_ODDS = 0.7
MIN_PROBABILITY = 0.02
MAX_PROBABILITY = 0.98


class ProbabilityGrid:
    """Occupancy probabilities on a regular raster.

    Parameters
    ----------
    cells : array of shape (height, width)
        Probabilities in [0, 1].
    resolution : float
        Cell edge length in meters.
    origin : (float, float)
        World coordinate of the outer corner of cell (0, 0).
    """

    def __init__(self, cells, resolution: float, origin=(0.0, 0.0)) -> None:
        cells = np.array(cells, dtype=float)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2-D array")
        if not resolution > 0:
            raise ValueError(f"resolution must be positive, got {resolution!r}")
        if np.any(~np.isfinite(cells)) or cells.min() < 0.0 or cells.max() > 1.0:
            raise ValueError("cell probabilities must lie in [0, 1]")
        self._cells = cells
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self._ox, self._oy = self.origin
        self._shape = cells.shape

    @classmethod
    def uniform(cls, width: int, height: int, resolution: float,
                origin=(0.0, 0.0), probability: float = 0.5) -> "ProbabilityGrid":
        return cls(np.full((height, width), probability), resolution, origin)

    @property
    def cells(self) -> np.ndarray:
        view = self._cells.view()
        view.flags.writeable = False
        return view

    @property
    def width(self) -> int:
        return self._cells.shape[1]

    @property
    def height(self) -> int:
        return self._cells.shape[0]

    def copy(self) -> "ProbabilityGrid":
        return ProbabilityGrid(self._cells.copy(), self.resolution, self.origin)

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        r = self.resolution
        return (self.origin[0] + (ix + 0.5) * r, self.origin[1] + (iy + 0.5) * r)

    def cell_index(self, wx: float, wy: float) -> tuple[int, int]:
        """Index ``(ix, iy)`` of the cell containing a world point (may be off-grid)."""
        r = self.resolution
        return (math.floor((wx - self.origin[0]) / r),
                math.floor((wy - self.origin[1]) / r))

    def contains_cell(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def _set_cells(self, cells: np.ndarray) -> None:
        self._cells = cells
        self._shape = cells.shape

    # -- interpolation ---------------------------------------------------
    def interpolate(self, wx: float, wy: float) -> tuple[float, float, float]:
        """Bicubic value and world-frame gradient ``(p, dp/dx, dp/dy)``.

        Catmull-Rom weights over the 4x4 neighbouring cell centers. Queries
        outside the interpolation window are clamped onto its border, where
        the gradient along the clamped axis is zero.
        """
        h, w = self._shape
        if w < 4 or h < 4:
            raise ValueError("bicubic lookup needs a grid of at least 4x4 cells")
        return _bicubic(self._cells, self._ox, self._oy, self.resolution, wx, wy)


@numba.njit(cache=True)
def _catmull_rom(t):
    """Four Catmull-Rom weights at ``t`` in [0, 1], then their derivatives."""
    t2 = t * t
    t3 = t2 * t
    return (0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t))


@numba.njit(cache=True)
def _bicubic(cells, ox, oy, r, wx, wy):
    h, w = cells.shape
    u = (wx - ox) / r - 0.5
    v = (wy - oy) / r - 0.5
    u_clamped = v_clamped = False
    if not u >= 1.0:  # also catches nan
        u, u_clamped = 1.0, True
    elif u > w - 2:
        u, u_clamped = float(w - 2), True
    if not v >= 1.0:
        v, v_clamped = 1.0, True
    elif v > h - 2:
        v, v_clamped = float(h - 2), True
    i = min(int(u), w - 3)
    j = min(int(v), h - 3)
    a0, a1, a2, a3, e0, e1, e2, e3 = _catmull_rom(u - i)
    b = _catmull_rom(v - j)
    value = grad_u = grad_v = 0.0
    for n in range(4):
        c0 = cells[j - 1 + n, i - 1]
        c1 = cells[j - 1 + n, i]
        c2 = cells[j - 1 + n, i + 1]
        c3 = cells[j - 1 + n, i + 2]
        along = a0 * c0 + a1 * c1 + a2 * c2 + a3 * c3
        value += b[n] * along
        grad_u += b[n] * (e0 * c0 + e1 * c1 + e2 * c2 + e3 * c3)
        grad_v += b[4 + n] * along
    if value < 0.0:
        return 0.0, 0.0, 0.0
    if value > 1.0:
        return 1.0, 0.0, 0.0
    gx = 0.0 if u_clamped else grad_u / r
    gy = 0.0 if v_clamped else grad_v / r
    return value, gx, gy


def grid_interpolate(grid: ProbabilityGrid, wx, wy):
    """Smooth probability lookup at a world point.

    Returns a float for float queries and a :class:`Jet3` when either
    coordinate is a jet, with derivatives chained through the map gradient.
    """
    x_jet = isinstance(wx, Jet3)
    y_jet = isinstance(wy, Jet3)
    if not (x_jet or y_jet):
        return grid.interpolate(float(wx), float(wy))[0]
    p, gx, gy = grid.interpolate(wx.a if x_jet else float(wx),
                                 wy.a if y_jet else float(wy))
    d0 = d1 = d2 = 0.0
    if x_jet:
        d0, d1, d2 = gx * wx.d0, gx * wx.d1, gx * wx.d2
    if y_jet:
        d0, d1, d2 = d0 + gy * wy.d0, d1 + gy * wy.d1, d2 + gy * wy.d2
    return _jet(p, d0, d1, d2)


# -- benchmark grids ------------------------------------------------------
def splat_kernel(distance, resolution: float):
    """Probability contributed by a point at ``distance`` meters.

    Gaussian bump of height ``PEAK_PROBABILITY`` over the background, with
    sigma of 1.5 cells, cut off to background beyond 4 sigma.
    """
    d = np.asarray(distance, dtype=float)
    sigma = SPLAT_SIGMA_CELLS * resolution
    bump = np.exp(-0.5 * (d / sigma) ** 2)
    p = BACKGROUND_PROBABILITY + (PEAK_PROBABILITY - BACKGROUND_PROBABILITY) * bump
    return np.where(d <= SPLAT_TRUNCATION_SIGMAS * sigma, p, BACKGROUND_PROBABILITY)


def grid_from_pointcloud(points, resolution: float, padding: int = 10) -> ProbabilityGrid:
    """Rasterise world-frame points into a grid of Gaussian peaks.

    Each point contributes :func:`splat_kernel` evaluated at every cell center;
    overlapping peaks combine by taking the maximum.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("cannot build a grid from an empty point cloud")
    if not resolution > 0:
        raise ValueError(f"resolution must be positive, got {resolution!r}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")
    padding = int(padding)
    if padding < 0:
        raise ValueError("padding must be non-negative")

    lo = np.floor(pts.min(axis=0) / resolution).astype(int) - padding
    hi = np.floor(pts.max(axis=0) / resolution).astype(int) + padding
    width, height = (hi - lo + 1).tolist()
    width, height = max(width, 4), max(height, 4)
    origin = (lo * resolution).tolist()

    cells = np.full((height, width), BACKGROUND_PROBABILITY)
    reach = int(math.ceil(SPLAT_TRUNCATION_SIGMAS * SPLAT_SIGMA_CELLS)) + 1
    for px, py in pts:
        cx = math.floor((px - origin[0]) / resolution)
        cy = math.floor((py - origin[1]) / resolution)
        x0, x1 = max(cx - reach, 0), min(cx + reach + 1, width)
        y0, y1 = max(cy - reach, 0), min(cy + reach + 1, height)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = origin[0] + (np.arange(x0, x1) + 0.5) * resolution
        ys = origin[1] + (np.arange(y0, y1) + 0.5) * resolution
        dist = np.hypot(xs[None, :] - px, ys[:, None] - py)
        np.maximum(cells[y0:y1, x0:x1], splat_kernel(dist, resolution),
                   out=cells[y0:y1, x0:x1])
    return ProbabilityGrid(cells, resolution, origin)


# -- map building ---------------------------------------------------------
def _odds_update(p: np.ndarray, factor: float) -> np.ndarray:
    p = np.clip(p, MIN_PROBABILITY, MAX_PROBABILITY)
    odds = p / (1.0 - p) * factor
    return np.clip(odds / (1.0 + odds), MIN_PROBABILITY, MAX_PROBABILITY)


def grid_insert_scan(grid: ProbabilityGrid, pose: Pose2D, cloud, max_range: float,
                     hit_odds: float = HIT_ODDS, miss_odds: float = MISS_ODDS) -> ProbabilityGrid:
    """Fuse one scan into ``grid`` in place and return it.

    Endpoints closer than ``max_range`` are hits; every cell crossed by a
    beam before its endpoint is a miss. Beams at or beyond ``max_range`` are
    shortened to it and contribute misses only. A cell is updated at most
    once per scan, hits taking precedence. Off-grid cells are skipped.
    """
    body = np.asarray(cloud, dtype=float).reshape(-1, 2)
    if len(body) == 0:
        return grid
    ranges = np.hypot(body[:, 0], body[:, 1])
    is_hit = ranges < max_range
    scale = np.where(is_hit | (ranges == 0.0), 1.0, max_range / np.where(ranges > 0, ranges, 1.0))
    world = transform_points(pose, body * scale[:, None])

    sx, sy = grid.cell_index(pose.x, pose.y)
    r = grid.resolution
    ex = np.floor((world[:, 0] - grid.origin[0]) / r).astype(int)
    ey = np.floor((world[:, 1] - grid.origin[1]) / r).astype(int)

    hits = set()
    misses = set()
    for k in range(len(body)):
        rr, cc = _bresenham(sy, sx, int(ey[k]), int(ex[k]))
        # Bresenham includes both ends; drop the endpoint cell.
        misses.update(zip(rr[:-1].tolist(), cc[:-1].tolist()))
        if is_hit[k]:
            hits.add((int(ey[k]), int(ex[k])))
    misses -= hits

    cells = grid._cells.copy()
    h, w = cells.shape
    for index_set, factor in ((hits, hit_odds), (misses, miss_odds)):
        idx = np.array([rc for rc in index_set if 0 <= rc[0] < h and 0 <= rc[1] < w],
                       dtype=int).reshape(-1, 2)
        if len(idx):
            cells[idx[:, 0], idx[:, 1]] = _odds_update(cells[idx[:, 0], idx[:, 1]], factor)
    grid._set_cells(cells)
    return grid
