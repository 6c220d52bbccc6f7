"""Desk-scale mapping run: segment world, raycast lidar, match-then-insert.

The robot follows a scripted path through waypoints. At each step the scan
is simulated at the true pose, the pose is predicted from the previous
estimate plus a noisy odometry increment, refined by :func:`match` against
the map built so far, and the scan is then inserted at the refined pose.
"""

from __future__ import annotations

import csv
import math
import shlex
import time
from dataclasses import dataclass, field

import numpy as np

from .costs import warm_up
from .geometry import Pose2D, normalize_angle, transform_points
from .grid import ProbabilityGrid, grid_insert_scan
from .matcher import DEFAULT_WEIGHTS, Backend, MatchRequest, match
from .solvers import SolverOptions, SolverReport, Termination

TRAJECTORY_HEADER = ("step,true_x,true_y,true_theta,est_x,est_y,est_theta,"
                     "iterations,time_us")
MAP_MARGIN = 1.0
HIGH_PROBABILITY = 0.6


class ScenarioError(ValueError):
    """A scenario file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Environment:
    segments: tuple

    def __post_init__(self) -> None:
        segs = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        if len(segs) == 0:
            raise ValueError("an environment needs at least one segment")
        if not np.all(np.isfinite(segs)):
            raise ValueError("segment coordinates must be finite")
        object.__setattr__(self, "segments", tuple(tuple(s) for s in segs.tolist()))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.segments).reshape(-1, 4)

    def bounds(self) -> tuple[float, float, float, float]:
        s = self.array
        xs, ys = s[:, [0, 2]], s[:, [1, 3]]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())


@dataclass(frozen=True)
class Lidar:
    beams: int = 360
    fov: float = 2.0 * math.pi
    max_range: float = 8.0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if int(self.beams) < 2:
            raise ValueError("a lidar needs at least 2 beams")
        if not (0 < self.fov <= 2.0 * math.pi):
            raise ValueError("fov must lie in (0, 2*pi]")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")

    def angles(self) -> np.ndarray:
        """Body-frame beam angles, centred on the heading."""
        full = self.fov >= 2.0 * math.pi
        return np.linspace(-self.fov / 2, self.fov / 2, int(self.beams), endpoint=not full)


@dataclass(frozen=True)
class Scenario:
    environment: Environment
    waypoints: tuple
    scans_per_leg: int = 10
    lidar: Lidar = field(default_factory=Lidar)
    seed: int = 0
    resolution: float = 0.05
    odometry_sigma: tuple = (0.02, 0.01)

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("a scenario needs at least 2 waypoints")
        if int(self.scans_per_leg) < 1:
            raise ValueError("scans_per_leg must be at least 1")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if min(self.odometry_sigma) < 0:
            raise ValueError("odometry noise must be non-negative")

    def true_poses(self) -> list[Pose2D]:
        """Waypoint 0, then ``scans_per_leg`` evenly spaced poses along each leg."""
        poses = [self.waypoints[0]]
        n = int(self.scans_per_leg)
        for a, b in zip(self.waypoints[:-1], self.waypoints[1:]):
            turn = normalize_angle(b.theta - a.theta)
            for k in range(1, n + 1):
                f = k / n
                poses.append(Pose2D(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y),
                                    a.theta + f * turn))
        return poses


def _numbers(args, count, name, lineno):
    if len(args) != count:
        raise ScenarioError(f"{name} takes {count} values, got {len(args)}", lineno)
    try:
        values = [float(a) for a in args]
    except ValueError as exc:
        raise ScenarioError(f"{name}: {exc}", lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise ScenarioError(f"{name}: values must be finite", lineno)
    return values


def _integer(args, name, lineno) -> int:
    (value,) = _numbers(args, 1, name, lineno)
    if value != int(value):
        raise ScenarioError(f"{name} must be an integer", lineno)
    return int(value)


def parse_scenario(text: str) -> Scenario:
    """Parse the line-oriented scenario format; ``#`` starts a comment.

    Directives: ``SEGMENT x1 y1 x2 y2``, ``WAYPOINT x y theta``,
    ``LIDAR beams fov max_range noise_sigma``, ``SCANS_PER_LEG n``,
    ``SEED n``, ``RESOLUTION r`` and ``ODOMETRY_NOISE sigma_xy sigma_theta``.
    """
    segments, waypoints = [], []
    settings = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, *args = shlex.split(line)
        key = name.upper()
        if key == "SEGMENT":
            segments.append(tuple(_numbers(args, 4, key, lineno)))
        elif key == "WAYPOINT":
            waypoints.append(Pose2D(*_numbers(args, 3, key, lineno)))
        elif key == "LIDAR":
            beams, fov, max_range, sigma = _numbers(args, 4, key, lineno)
            try:
                settings["lidar"] = Lidar(int(beams), fov, max_range, sigma)
            except ValueError as exc:
                raise ScenarioError(str(exc), lineno) from None
        elif key == "SCANS_PER_LEG":
            settings["scans_per_leg"] = _integer(args, key, lineno)
        elif key == "SEED":
            settings["seed"] = _integer(args, key, lineno)
        elif key == "RESOLUTION":
            settings["resolution"] = _numbers(args, 1, key, lineno)[0]
        elif key == "ODOMETRY_NOISE":
            settings["odometry_sigma"] = tuple(_numbers(args, 2, key, lineno))
        else:
            raise ScenarioError(f"unknown directive {name!r}", lineno)
    if not segments:
        raise ScenarioError("no SEGMENT directives")
    try:
        return Scenario(Environment(tuple(segments)), tuple(waypoints), **settings)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())


def raycast(env: Environment, pose: Pose2D, angles, max_range: float) -> np.ndarray:
    """Distance along each body-frame beam angle to the nearest segment, capped."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    angles = np.asarray(angles, dtype=float).reshape(-1)
    world = pose.theta + angles
    dx, dy = np.cos(world)[:, None], np.sin(world)[:, None]
    s = env.array
    ax, ay = s[None, :, 0] - pose.x, s[None, :, 1] - pose.y
    ex, ey = s[None, :, 2] - s[None, :, 0], s[None, :, 3] - s[None, :, 1]
    # Solve t*d = a + u*e for the ray parameter t and segment parameter u.
    denom = ex * dy - ey * dx
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ex * ay - ey * ax) / denom
        u = (dx * ay - dy * ax) / denom
    eps = 1e-12
    valid = (denom != 0.0) & (t >= 0.0) & (u >= -eps) & (u <= 1.0 + eps)
    hit = np.where(valid, t, np.inf)

    # Segments lying along the ray: the nearer endpoint ahead of the origin.
    parallel = denom == 0.0
    if np.any(parallel):
        on_line = parallel & (np.abs(ax * dy - ay * dx) <= eps)
        t0 = ax * dx + ay * dy
        t1 = (ax + ex) * dx + (ay + ey) * dy
        lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
        along = np.where(hi < 0.0, np.inf, np.maximum(lo, 0.0))
        hit = np.where(on_line, np.minimum(hit, along), hit)
    return np.minimum(hit.min(axis=1), max_range)


def scan_points(ranges, angles) -> np.ndarray:
    """Body-frame endpoints for the given beam ranges."""
    ranges, angles = np.asarray(ranges, dtype=float), np.asarray(angles, dtype=float)
    return np.column_stack([ranges * np.cos(angles), ranges * np.sin(angles)])


def empty_map(env: Environment, resolution: float) -> ProbabilityGrid:
    """Unknown (0.5) grid over the environment bounding box plus a 1 m margin.

    The grid is offset by half a cell so that multiples of ``resolution``
    fall on cell centers.
    """
    x0, y0, x1, y1 = env.bounds()
    r = resolution
    ix0 = math.floor((x0 - MAP_MARGIN) / r)
    iy0 = math.floor((y0 - MAP_MARGIN) / r)
    width = math.ceil((x1 + MAP_MARGIN) / r) - ix0 + 1
    height = math.ceil((y1 + MAP_MARGIN) / r) - iy0 + 1
    return ProbabilityGrid.uniform(width, height, r, ((ix0 - 0.5) * r, (iy0 - 0.5) * r))


@dataclass
class MappingResult:
    grid: ProbabilityGrid
    true_poses: list
    estimates: list
    reports: list
    times_us: list

    @property
    def max_translation_error(self) -> float:
        return max(math.hypot(e.x - t.x, e.y - t.y)
                   for e, t in zip(self.estimates, self.true_poses))

    @property
    def max_rotation_error(self) -> float:
        return max(abs(normalize_angle(e.theta - t.theta))
                   for e, t in zip(self.estimates, self.true_poses))

    @property
    def cumulative_match_ms(self) -> np.ndarray:
        return np.cumsum(self.times_us) / 1e3


def _unmatched_report(termination: Termination) -> SolverReport:
    return SolverReport(0, math.nan, math.nan, 0.0, termination)


def run_mapping(scenario: Scenario, backend="residual", out_prefix=None,
                max_total_match_ms: float | None = None,
                weights=DEFAULT_WEIGHTS, options: SolverOptions | None = None) -> MappingResult:
    """Walk the scripted path and build the map with the chosen backend.

    The first scan defines the map and is inserted at its true pose. Once
    the cumulative match time exceeds ``max_total_match_ms``, later scans
    skip matching and are inserted at the odometry prediction (reported
    with zero iterations). With ``out_prefix`` the map and trajectory are
    written to ``<prefix>_map.pgm`` and ``<prefix>_trajectory.csv``.
    """
    backend = Backend(backend)
    options = options or SolverOptions()
    warm_up()
    rng = np.random.default_rng(int(scenario.seed))
    lidar = scenario.lidar
    angles = lidar.angles()
    grid = empty_map(scenario.environment, scenario.resolution)
    sigma_xy, sigma_theta = scenario.odometry_sigma

    truths = scenario.true_poses()
    estimates, reports, times = [], [], []
    spent_ms = 0.0
    for step, truth in enumerate(truths):
        ranges = raycast(scenario.environment, truth, angles, lidar.max_range)
        if lidar.noise_sigma > 0:
            ranges = np.clip(ranges + rng.normal(0.0, lidar.noise_sigma, ranges.shape),
                             0.0, lidar.max_range)
        body = scan_points(ranges, angles)
        hits = body[ranges < lidar.max_range]

        if step == 0:
            estimate, report, elapsed = truth, _unmatched_report(Termination.CONVERGED), 0.0
        else:
            increment = truths[step - 1].inverse() @ truth
            noise = rng.normal(0.0, 1.0, 3) * (sigma_xy, sigma_xy, sigma_theta)
            noisy = Pose2D(increment.x + noise[0], increment.y + noise[1],
                           increment.theta + noise[2])
            predicted = estimates[-1] @ noisy
            budget_left = max_total_match_ms is None or spent_ms < max_total_match_ms
            if len(hits) and budget_left:
                req = MatchRequest((predicted.x, predicted.y), predicted, hits, grid, backend,
                                   weights, options)
                t0 = time.perf_counter()
                result = match(req)
                elapsed = (time.perf_counter() - t0) * 1e6
                estimate, report = result.pose_estimate, result.report
            else:
                estimate, report = predicted, _unmatched_report(Termination.MAX_ITERATIONS)
                elapsed = 0.0
        spent_ms += elapsed / 1e3
        grid_insert_scan(grid, estimate, body, lidar.max_range)
        estimates.append(estimate)
        reports.append(report)
        times.append(elapsed)

    result = MappingResult(grid, truths, estimates, reports, times)
    if out_prefix is not None:
        write_pgm(grid, f"{out_prefix}_map.pgm")
        write_trajectory(result, f"{out_prefix}_trajectory.csv")
    return result


def write_trajectory(result: MappingResult, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        for step, (t, e, rep, us) in enumerate(zip(result.true_poses, result.estimates,
                                                    result.reports, result.times_us)):
            writer.writerow([step, *(repr(v) for v in (*t, *e)), rep.iterations, f"{us:.1f}"])


def pgm_gray(p) -> np.ndarray:
    """Gray level ``round(255 * (1 - p))`` with halves rounded up."""
    # 255 - 255p is exact where 255(1 - p) is not (p = 0.9 must give 26).
    return np.floor(255.0 - 255.0 * np.asarray(p, dtype=float) + 0.5).astype(int)


def write_pgm(grid: ProbabilityGrid, path) -> None:
    """ASCII PGM with north (+y) at the top; occupied cells are dark."""
    gray = pgm_gray(grid.cells)[::-1]
    with open(path, "w") as fh:
        fh.write(f"P2\n{grid.width} {grid.height}\n255\n")
        for row in gray:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def wall_cells(scenario: Scenario, poses=None) -> set:
    """Cells holding noise-free beam endpoints taken at the true poses."""
    grid = empty_map(scenario.environment, scenario.resolution)
    lidar = scenario.lidar
    angles = lidar.angles()
    cells = set()
    for pose in poses if poses is not None else scenario.true_poses():
        ranges = raycast(scenario.environment, pose, angles, lidar.max_range)
        world = transform_points(pose, scan_points(ranges, angles)[ranges < lidar.max_range])
        for wx, wy in world:
            ix, iy = grid.cell_index(wx, wy)
            if grid.contains_cell(ix, iy):
                cells.add((ix, iy))
    return cells


def wall_coverage(grid: ProbabilityGrid, walls: set, threshold: float = HIGH_PROBABILITY) -> float:
    """Fraction of ``walls`` with a map cell above ``threshold`` within one cell."""
    if not walls:
        return math.nan
    occupied = grid.cells > threshold
    h, w = occupied.shape
    covered = 0
    for ix, iy in walls:
        patch = occupied[max(iy - 1, 0):min(iy + 2, h), max(ix - 1, 0):min(ix + 2, w)]
        covered += bool(patch.any())
    return covered / len(walls)
