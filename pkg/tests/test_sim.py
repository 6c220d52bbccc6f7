import math
from pathlib import Path

import numpy as np
import pytest

from scanmatch.geometry import Pose2D
from scanmatch.grid import ProbabilityGrid
from scanmatch.sim import (
    TRAJECTORY_HEADER,
    Environment,
    Lidar,
    Scenario,
    ScenarioError,
    empty_map,
    load_scenario,
    parse_scenario,
    pgm_gray,
    raycast,
    run_mapping,
    wall_cells,
    wall_coverage,
    write_pgm,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

SMALL = """
# 3 x 2 m box
SEGMENT -1.5 -1 1.5 -1
SEGMENT 1.5 -1 1.5 1
SEGMENT 1.5 1 -1.5 1
SEGMENT -1.5 1 -1.5 -1
WAYPOINT -0.5 0 0
WAYPOINT 0.5 0 0.3
LIDAR 360 6.283185307179586 5 0.0
SCANS_PER_LEG 3
SEED 3
RESOLUTION 0.05
ODOMETRY_NOISE 0.01 0.005
"""


# -- scenario parsing ------------------------------------------------------------
def test_parse_small_scenario():
    sc = parse_scenario(SMALL)
    assert len(sc.environment.segments) == 4
    assert sc.waypoints[1] == Pose2D(0.5, 0.0, 0.3)
    assert sc.lidar == Lidar(360, 2 * math.pi, 5.0, 0.0)
    assert (sc.scans_per_leg, sc.seed, sc.resolution) == (3, 3, 0.05)
    assert sc.odometry_sigma == (0.01, 0.005)
    poses = sc.true_poses()
    assert len(poses) == 4 and poses[-1] == sc.waypoints[-1]


def test_defaults_when_directives_absent():
    sc = parse_scenario("SEGMENT 0 0 1 0\nWAYPOINT 0 0 0\nWAYPOINT 1 1 0\n")
    assert sc.odometry_sigma == (0.02, 0.01)
    assert sc.scans_per_leg == 10


@pytest.mark.parametrize("text, line", [
    ("SEGMENT 0 0 1 0\nFROB 1\n", 2),
    ("# c\n\nSEGMENT 0 0 1\n", 3),
    ("SEGMENT 0 0 1 0\nSCANS_PER_LEG 2.5\n", 2),
    ("SEGMENT 0 0 1 0\nLIDAR 1 6.28 5 0\n", 2),
    ("SEGMENT 0 0 nan 0\n", 1),
])
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_parse_errors_without_line():
    with pytest.raises(ScenarioError):
        parse_scenario("WAYPOINT 0 0 0\nWAYPOINT 1 0 0\n")
    with pytest.raises(ScenarioError):
        parse_scenario("SEGMENT 0 0 1 0\nWAYPOINT 0 0 0\n")


def test_shipped_scenarios_load():
    for path in SCENARIOS.glob("*.txt"):
        assert len(load_scenario(path).true_poses()) > 2


# -- raycasting ------------------------------------------------------------------
WALL = Environment((((2.0, -5.0), (2.0, 5.0)),))


def test_raycast_examples():
    origin = Pose2D(0.0, 0.0, 0.0)
    assert raycast(WALL, origin, [0.0], 8.0)[0] == pytest.approx(2.0)
    assert raycast(WALL, origin, [math.pi], 8.0)[0] == 8.0
    assert raycast(WALL, origin, [0.0], 1.5)[0] == 1.5
    assert raycast(WALL, Pose2D(0, 0, math.pi / 2), [-math.pi / 2], 8.0)[0] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        raycast(WALL, origin, [0.0], 0.0)


def test_raycast_collinear_segment():
    env = Environment((((1.0, 0.0), (3.0, 0.0)),))
    assert raycast(env, Pose2D(0, 0, 0), [0.0], 8.0)[0] == pytest.approx(1.0)
    assert raycast(env, Pose2D(2, 0, 0), [0.0], 8.0)[0] == 0.0


def _segment_distance(px, py, seg):
    x1, y1, x2, y2 = np.ravel(seg)
    ex, ey = x2 - x1, y2 - y1
    u = np.clip(((px - x1) * ex + (py - y1) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
    return np.hypot(px - (x1 + u * ex), py - (y1 + u * ey))


def _sampled_hit(env, pose, angle, max_range):
    """First sample along the ray that touches a segment: coarse scan, then refine."""
    c, s = math.cos(pose.theta + angle), math.sin(pose.theta + angle)
    lo, hi, step = 0.0, max_range, 1e-3
    for _ in range(3):
        t = np.arange(lo, hi + step, step)
        px, py = pose.x + t * c, pose.y + t * s
        d = np.min([_segment_distance(px, py, seg) for seg in env.segments], axis=0)
        touching = np.nonzero(d <= step)[0]
        if not len(touching):
            return max_range
        first = t[touching[0]]
        lo, hi, step = max(first - 4 * step, 0.0), first + 4 * step, step / 100
    return first


def test_raycast_through_endpoints_matches_sampling_oracle():
    env = Environment((((2.0, 1.0), (2.0, 3.0)), ((1.0, 1.0), (3.0, -0.5)),
                       ((-1.0, -1.0), (-2.0, 1.0))))
    pose = Pose2D(0.0, 0.0, 0.2)
    targets = [(2.0, 1.0), (1.0, 1.0), (3.0, -0.5), (-1.0, -1.0), (-2.0, 1.0)]
    for tx, ty in targets:
        angle = math.atan2(ty, tx) - pose.theta
        got = raycast(env, pose, [angle], 8.0)[0]
        assert abs(got - _sampled_hit(env, pose, angle, 8.0)) < 1e-6


def test_raycast_random_rays_match_sampling_oracle():
    rng = np.random.default_rng(8)
    env = Environment(tuple(tuple(map(tuple, rng.uniform(-3, 3, (2, 2)))) for _ in range(5)))
    pose = Pose2D(0.1, -0.2, 0.4)
    for angle in rng.uniform(-math.pi, math.pi, 10):
        got = raycast(env, pose, [angle], 6.0)[0]
        assert abs(got - _sampled_hit(env, pose, angle, 6.0)) < 1e-6


def test_lidar_angles():
    full = Lidar(4).angles()
    np.testing.assert_allclose(full, [-math.pi, -math.pi / 2, 0.0, math.pi / 2])
    part = Lidar(3, fov=math.pi).angles()
    np.testing.assert_allclose(part, [-math.pi / 2, 0.0, math.pi / 2])
    with pytest.raises(ValueError):
        Lidar(1)


# -- map output ------------------------------------------------------------------
def test_pgm_gray_examples():
    assert pgm_gray(1.0) == 0
    assert pgm_gray(0.0) == 255
    assert pgm_gray(0.5) == 128
    assert pgm_gray(0.9) == 26
    j = np.arange(256)
    np.testing.assert_array_equal(pgm_gray(j / 255.0), 255 - j)


def _pgm_values(path):
    lines = Path(path).read_text().splitlines()
    return lines[:3], [list(map(int, row.split())) for row in lines[3:]]


@pytest.mark.parametrize("p, gray", [(1.0, 0), (0.0, 255), (0.5, 128)])
def test_write_pgm_uniform(tmp_path, p, gray):
    path = tmp_path / "m.pgm"
    write_pgm(ProbabilityGrid(np.full((4, 6), p), 0.1), path)
    header, rows = _pgm_values(path)
    assert header == ["P2", "6 4", "255"]
    assert len(rows) == 4 and all(row == [gray] * 6 for row in rows)


def test_write_pgm_is_north_up(tmp_path):
    cells = np.zeros((4, 4))
    cells[3, 0] = 1.0  # highest y, lowest x
    path = tmp_path / "m.pgm"
    write_pgm(ProbabilityGrid(cells, 0.1), path)
    _, rows = _pgm_values(path)
    assert rows[0][0] == 0 and sum(v == 0 for row in rows for v in row) == 1


def test_empty_map_covers_environment():
    env = Environment((((-2.0, -1.5), (2.0, 1.5)),))
    grid = empty_map(env, 0.05)
    x0, y0 = grid.origin
    assert x0 <= -3.0 and y0 <= -2.5
    assert x0 + grid.width * 0.05 >= 3.0 and y0 + grid.height * 0.05 >= 2.5
    cx, cy = grid.cell_center(*grid.cell_index(0.5, -1.0))
    assert (cx, cy) == pytest.approx((0.5, -1.0))


# -- mapping runs ------------------------------------------------------------------
def test_small_run_outputs(tmp_path):
    sc = parse_scenario(SMALL)
    prefix = tmp_path / "small"
    result = run_mapping(sc, "graph", prefix)
    assert len(result.estimates) == len(result.reports) == 4
    assert result.estimates[0] == sc.waypoints[0]
    traj = (tmp_path / "small_trajectory.csv").read_text().splitlines()
    assert traj[0] == TRAJECTORY_HEADER and len(traj) == 5
    header, rows = _pgm_values(tmp_path / "small_map.pgm")
    assert header[1] == f"{result.grid.width} {result.grid.height}"
    assert result.max_translation_error < 0.05


def test_same_seed_same_map_bytes(tmp_path):
    sc = parse_scenario(SMALL)
    for name in ("a", "b"):
        run_mapping(sc, "residual", tmp_path / name)
    assert (tmp_path / "a_map.pgm").read_bytes() == (tmp_path / "b_map.pgm").read_bytes()


def test_match_budget_falls_back_to_odometry():
    sc = parse_scenario(SMALL)
    result = run_mapping(sc, "residual", max_total_match_ms=1e-6)
    iterations = [r.iterations for r in result.reports]
    assert iterations[1] > 0 and iterations[2:] == [0, 0]
    assert result.times_us[2:] == [0.0, 0.0]


def test_unwritable_prefix(tmp_path):
    with pytest.raises(OSError):
        run_mapping(parse_scenario(SMALL), "graph", tmp_path / "nope" / "x")


@pytest.fixture(scope="module")
def room_runs():
    sc = load_scenario(SCENARIOS / "room.txt")
    return sc, {b: run_mapping(sc, b) for b in ("residual", "graph")}


def test_zero_noise_first_scan_exact(room_runs):
    sc, runs = room_runs
    for result in runs.values():
        assert result.estimates[0] == sc.true_poses()[0]


def test_zero_noise_backends_give_near_identical_maps(room_runs):
    _, runs = room_runs
    a, b = (pgm_gray(r.grid.cells) for r in runs.values())
    assert np.mean(a != b) < 0.01


def test_noisy_room_wall_coverage():
    sc = load_scenario(SCENARIOS / "room_noisy.txt")
    walls = wall_cells(sc)
    for backend in ("residual", "graph"):
        result = run_mapping(sc, backend)
        assert wall_coverage(result.grid, walls) >= 0.95
        assert np.all(np.isfinite(result.cumulative_match_ms))


def test_wall_coverage_oracle_on_known_grid():
    sc = parse_scenario(SMALL)
    walls = wall_cells(sc)
    grid = empty_map(sc.environment, sc.resolution)
    assert wall_coverage(grid, walls) == 0.0
    cells = np.full((grid.height, grid.width), 0.5)
    for ix, iy in walls:
        cells[iy, ix] = 0.9
    assert wall_coverage(ProbabilityGrid(cells, grid.resolution, grid.origin), walls) == 1.0
