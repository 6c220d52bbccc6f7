"""One test per acceptance criterion; each records a PASS or FAIL line."""

import io
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from scanmatch.autodiff import Jet3, jet_variable
from scanmatch.bench import BenchConfig, generate_trial, rmse, run_benchmark, run_trial, summarize
from scanmatch.costs import (
    occupied_space_residuals,
    rotation_delta_residual,
    translation_delta_residual,
    warm_up,
)
from scanmatch.geometry import Pose2D, normalize_angle, transform_points
from scanmatch.grid import grid_from_pointcloud
from scanmatch.matcher import Backend
from scanmatch.sim import load_scenario, run_mapping, wall_cells, wall_coverage
from scanmatch.solvers import (
    Algorithm,
    LeastSquaresProblem,
    SolverOptions,
    cholesky_solve,
    solve_residual_blocks,
)

ROOM = Path(__file__).resolve().parents[1] / "scenarios" / "room.txt"


def verdict(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


# 1 -----------------------------------------------------------------------------
def _close(jet_grad, fd):
    return np.all((np.abs(jet_grad - fd) <= 1e-5) | (np.abs(jet_grad - fd) <= 1e-4 * np.abs(fd)))


def test_criterion_1_autodiff_matches_finite_differences():
    warm_up()
    rng = np.random.default_rng(1001)
    h = 1e-6
    failures = {"occupied": 0, "translation": 0, "rotation": 0}
    t0 = time.perf_counter()
    for _ in range(100):
        truth = Pose2D(*rng.uniform(-1, 1, 2), rng.uniform(-math.pi, math.pi))
        cloud = rng.uniform(-2, 2, (5, 2))
        grid = grid_from_pointcloud(transform_points(truth, cloud), 0.035, 40)
        pose = np.array(tuple(truth)) + rng.uniform(-0.2, 0.2, 3)
        target = rng.uniform(-1, 1, 2)
        heading = rng.uniform(-math.pi, math.pi)
        funcs = {
            "occupied": lambda p: occupied_space_residuals(p, cloud, grid, 10.0),
            "translation": lambda p: translation_delta_residual(p, target, 10.0),
            "rotation": lambda p: rotation_delta_residual(p, heading, 40.0),
        }
        seeded = tuple(jet_variable(v, k) for k, v in enumerate(pose))
        for name, f in funcs.items():
            jets = f(seeded)
            J = np.array([r.v if isinstance(r, Jet3) else (0.0,) * 3 for r in jets])
            fd = np.zeros_like(J)
            for k in range(3):
                up, dn = pose.copy(), pose.copy()
                up[k] += h
                dn[k] -= h
                fd[:, k] = (np.array(f(tuple(up)), float) - np.array(f(tuple(dn)), float)) / (2 * h)
            failures[name] += not _close(J, fd)
    elapsed = time.perf_counter() - t0
    ok = not any(failures.values()) and elapsed < 5.0
    verdict(1, ok, f"mismatching poses per residual type {failures}, {elapsed:.2f} s")


# 2 -----------------------------------------------------------------------------
def test_criterion_2_backend_equivalence():
    warm_up()
    config = BenchConfig(trials=1000)
    t0 = time.perf_counter()
    records = [r for i in range(config.trials) for r in run_trial(config, i)]
    elapsed = time.perf_counter() - t0
    summary = summarize(records, config)
    rate = summary.agreement_rate
    flat = [d for d in summary.disagreements
            if d.residual_gradient_norm < 1e-6 and d.graph_gradient_norm < 1e-6]
    ok = rate >= 0.95 and len(flat) == len(summary.disagreements) and elapsed < 60.0
    verdict(2, ok, f"agreement {rate:.3f} (needs 0.95), "
                   f"{len(flat)}/{len(summary.disagreements)} disagreements at gradient < 1e-6 "
                   f"on both sides (needs all), {elapsed:.1f} s")


# 3 -----------------------------------------------------------------------------
def test_criterion_3_benchmark_regime(tmp_path):
    summary = run_benchmark(BenchConfig(), tmp_path / "bench.csv", stream=io.StringIO())
    parts, ok = [], True
    for backend, s in summary.per_backend.items():
        ok &= s.rmse < 1.0 and s.mean_iterations <= 50 and s.mean_time_ms <= 10.0
        parts.append(f"{backend.value} RMSE {s.rmse:.4f} m, {s.mean_iterations:.1f} iters, "
                     f"{s.mean_time_ms:.2f} ms")
    verdict(3, ok, "; ".join(parts))


# 4 -----------------------------------------------------------------------------
def test_criterion_4_solver_oracles():
    linear = LeastSquaresProblem([0.0], [lambda p: [p[0] - 5.0]])
    x, rep = solve_residual_blocks(linear, SolverOptions(algorithm=Algorithm.GAUSS_NEWTON))
    linear_ok = rep.iterations == 1 and abs(x[0] - 5.0) < 1e-12

    rosen = LeastSquaresProblem([-1.2, 1.0], [lambda p: [10.0 * (p[1] - p[0] ** 2), 1.0 - p[0]]])
    _, rrep = solve_residual_blocks(rosen, SolverOptions(max_iterations=200))
    rosen_ok = rrep.final_cost < 1e-10 and rrep.iterations <= 200

    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 8))
        m = rng.normal(size=(n, n))
        a = m @ m.T + 1e-3 * np.eye(n)
        b = rng.normal(size=n)
        worst = max(worst, float(np.linalg.norm(a @ cholesky_solve(a, b) - b)))
    ok = linear_ok and rosen_ok and worst < 1e-10
    verdict(4, ok, f"linear GN iterations {rep.iterations}, Rosenbrock cost {rrep.final_cost:.1e} "
                   f"after {rrep.iterations} LM iterations, worst SPD residual {worst:.1e}")


# 5 -----------------------------------------------------------------------------
def test_criterion_5_perturbation_recovery():
    config = BenchConfig(trials=200, max_translation=0.1, max_rotation=0.05, seed=5)
    records = [r for i in range(config.trials) for r in run_trial(config, i)]
    rates = {}
    for backend in Backend:
        mine = [r for r in records if r.backend is backend]
        good = sum(math.hypot(r.estimate.x - r.truth.x, r.estimate.y - r.truth.y) <= 0.02
                   and abs(normalize_angle(r.estimate.theta - r.truth.theta)) <= 0.01
                   for r in mine)
        rates[backend.value] = good / len(mine)
    verdict(5, min(rates.values()) >= 0.90,
            ", ".join(f"{k} {v:.3f}" for k, v in rates.items()) + " recovered (needs 0.90)")


# 6 -----------------------------------------------------------------------------
def test_criterion_6_determinism(tmp_path):
    rows = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.csv"
        run_benchmark(BenchConfig(trials=20), path, stream=io.StringIO())
        rows.append([line.rsplit(",", 1)[0] for line in path.read_text().splitlines()])
    bench_ok = rows[0] == rows[1]
    scenario = load_scenario(ROOM.with_name("room_noisy.txt"))
    maps = []
    for name in ("a", "b"):
        run_mapping(scenario, "graph", tmp_path / f"sim_{name}")
        maps.append((tmp_path / f"sim_{name}_map.pgm").read_bytes())
    sim_ok = maps[0] == maps[1]
    verdict(6, bench_ok and sim_ok, f"bench CSVs equal without time_us: {bench_ok}, "
                                    f"sim maps byte-identical: {sim_ok}")


# 7 and 8 -------------------------------------------------------------------------
@pytest.fixture(scope="module")
def room_results():
    scenario = load_scenario(ROOM)
    t0 = time.perf_counter()
    runs = {b: run_mapping(scenario, b) for b in ("residual", "graph")}
    return scenario, runs, time.perf_counter() - t0


def test_criterion_7_mapping_fidelity(room_results):
    scenario, runs, elapsed = room_results
    walls = wall_cells(scenario)
    parts, ok = [], elapsed < 30.0
    for backend, result in runs.items():
        coverage = wall_coverage(result.grid, walls)
        ok &= coverage >= 0.95 and result.max_translation_error < 1e-3
        parts.append(f"{backend} coverage {coverage:.3f}, max error "
                     f"{result.max_translation_error * 1e3:.3f} mm / "
                     f"{result.max_rotation_error * 1e3:.3f} mrad")
    verdict(7, ok, "; ".join(parts) + f", {elapsed:.1f} s")


def test_criterion_8_documentation_only(room_results):
    _, runs, _ = room_results
    totals = ", ".join(f"{b} {r.cumulative_match_ms[-1]:.0f} ms over {len(r.reports) - 1} matches"
                       for b, r in runs.items())
    ACCEPTANCE_LINES.append(f"criterion 8: NOT TESTABLE (real-robot results; substitute "
                            f"evidence is criterion 7 plus cumulative match time: {totals})")
