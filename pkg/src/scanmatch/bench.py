"""Seeded synthetic benchmark: random clouds, both backends, CSV + summary.

Every trial is generated from its own generator seeded with ``[seed, index]``
(numpy's PCG64 behind a SeedSequence), so a trial can be reproduced without
replaying the ones before it.
"""

from __future__ import annotations

import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .costs import warm_up
from .geometry import Pose2D, normalize_angle, transform_points
from .grid import grid_from_pointcloud
from .matcher import DEFAULT_WEIGHTS, Backend, MatchRequest, match
from .solvers import SolverOptions

log = logging.getLogger(__name__)

CSV_HEADER = ("trial,backend,init_x,init_y,init_theta,gt_x,gt_y,gt_theta,"
              "est_x,est_y,est_theta,final_cost,iterations,time_us")
AGREEMENT_RTOL = 1e-6


@dataclass(frozen=True)
class BenchConfig:
    """Everything that determines a benchmark run apart from wall-clock time."""

    seed: int = 42
    trials: int = 20
    points_per_cloud: int = 5
    max_translation: float = 0.3
    max_rotation: float = 0.15
    backends: tuple = (Backend.RESIDUAL, Backend.GRAPH)
    truth_box: float = 1.0
    truth_max_rotation: float = math.pi / 4
    point_box: float = 2.0
    resolution: float = 0.035
    padding: int = 40
    weights: tuple = DEFAULT_WEIGHTS
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        if int(self.trials) < 1:
            raise ValueError("trials must be at least 1")
        if int(self.points_per_cloud) < 1:
            raise ValueError("points_per_cloud must be at least 1")
        if not (self.max_translation >= 0 and self.max_rotation >= 0):
            raise ValueError("perturbation bounds must be non-negative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        backends = tuple(Backend(b) for b in self.backends)
        if not backends:
            raise ValueError("select at least one backend")
        object.__setattr__(self, "backends", backends)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    backend: Backend
    initial: Pose2D
    truth: Pose2D
    estimate: Pose2D
    final_cost: float
    iterations: int
    time_us: float
    gradient_norm: float
    termination: str

    def csv_row(self) -> list[str]:
        poses = (*self.initial, *self.truth, *self.estimate)
        return ([str(self.trial), self.backend.value] + [repr(float(v)) for v in poses]
                + [repr(float(self.final_cost)), str(self.iterations), f"{self.time_us:.1f}"])


@dataclass(frozen=True)
class Disagreement:
    """A trial whose backends ended at different costs."""

    trial: int
    residual_cost: float
    graph_cost: float
    residual_gradient_norm: float
    graph_gradient_norm: float


@dataclass
class BackendSummary:
    rmse: float
    mean_iterations: float
    mean_time_ms: float
    converged: int


@dataclass
class BenchSummary:
    records: list
    per_backend: dict
    disagreements: list
    compared: int

    @property
    def agreement_rate(self) -> float:
        return 1.0 - len(self.disagreements) / self.compared if self.compared else math.nan


def generate_trial(seed: int, index: int, config: BenchConfig | None = None):
    """``(grid, cloud, truth_pose, initial_pose)`` for trial ``index``.

    The translation perturbation is uniform over a disk of radius
    ``max_translation``; the rotation perturbation is uniform in
    ``[-max_rotation, max_rotation]``.
    """
    config = config or BenchConfig()
    rng = np.random.default_rng([int(seed), int(index)])
    b, r = config.truth_box, config.truth_max_rotation
    truth = Pose2D(rng.uniform(-b, b), rng.uniform(-b, b), rng.uniform(-r, r))
    p = config.point_box
    cloud = rng.uniform(-p, p, size=(int(config.points_per_cloud), 2))
    grid = grid_from_pointcloud(transform_points(truth, cloud), config.resolution,
                                config.padding)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    radius = config.max_translation * math.sqrt(rng.uniform())
    dtheta = rng.uniform(-1.0, 1.0) * config.max_rotation
    initial = Pose2D(truth.x + radius * math.cos(heading),
                     truth.y + radius * math.sin(heading),
                     truth.theta + dtheta)
    return grid, cloud, truth, initial


def rmse(estimates: Sequence, truths: Sequence, with_theta: bool = False) -> float:
    """Root mean squared translation error; ``with_theta`` adds the heading error."""
    if len(estimates) != len(truths):
        raise ValueError(f"got {len(estimates)} estimates for {len(truths)} truths")
    if not estimates:
        raise ValueError("rmse needs at least one pose pair")
    total = 0.0
    for est, gt in zip(estimates, truths):
        ex, ey, et = (float(v) for v in est)
        gx, gy, gth = (float(v) for v in gt)
        total += (ex - gx) ** 2 + (ey - gy) ** 2
        if with_theta:
            total += normalize_angle(et - gth) ** 2
    return math.sqrt(total / len(estimates))


def costs_agree(a: float, b: float, rtol: float = AGREEMENT_RTOL) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)


def run_trial(config: BenchConfig, index: int) -> list[TrialRecord]:
    grid, cloud, truth, initial = generate_trial(config.seed, index, config)
    records = []
    for backend in config.backends:
        req = MatchRequest((truth.x, truth.y), initial, cloud, grid, backend,
                           config.weights, config.options)
        t0 = time.perf_counter()
        result = match(req)
        elapsed = (time.perf_counter() - t0) * 1e6
        rep = result.report
        records.append(TrialRecord(index, backend, initial, truth, result.pose_estimate,
                                   rep.final_cost, rep.iterations, elapsed,
                                   rep.gradient_norm, rep.termination.value))
    return records


def summarize(records: list, config: BenchConfig, with_theta: bool = False) -> BenchSummary:
    per_backend = {}
    for backend in config.backends:
        rows = [r for r in records if r.backend is backend]
        per_backend[backend] = BackendSummary(
            rmse=rmse([r.estimate for r in rows], [r.truth for r in rows], with_theta),
            mean_iterations=float(np.mean([r.iterations for r in rows])),
            mean_time_ms=float(np.mean([r.time_us for r in rows])) / 1e3,
            converged=sum(r.termination == "Converged" for r in rows),
        )
    disagreements = []
    compared = 0
    if {Backend.RESIDUAL, Backend.GRAPH} <= set(config.backends):
        by_trial = {}
        for r in records:
            by_trial.setdefault(r.trial, {})[r.backend] = r
        for trial, pair in sorted(by_trial.items()):
            res, gra = pair[Backend.RESIDUAL], pair[Backend.GRAPH]
            compared += 1
            if not costs_agree(res.final_cost, gra.final_cost):
                d = Disagreement(trial, res.final_cost, gra.final_cost,
                                 res.gradient_norm, gra.gradient_norm)
                disagreements.append(d)
                log.warning("trial %d: costs differ (residual %.9g, graph %.9g); "
                            "gradient inf-norms %.3g / %.3g", trial, d.residual_cost,
                            d.graph_cost, d.residual_gradient_norm, d.graph_gradient_norm)
    return BenchSummary(records, per_backend, disagreements, compared)


def write_csv(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        for r in sorted(records, key=lambda r: (r.trial, r.backend is not Backend.RESIDUAL)):
            writer.writerow(r.csv_row())


def write_pose_dump(records: list, path) -> None:
    """One line per trial: initial, residual-backend and graph-backend poses."""
    nan = (math.nan,) * 3
    by_trial = {}
    for r in records:
        by_trial.setdefault(r.trial, {"initial": tuple(r.initial)})[r.backend] = tuple(r.estimate)
    with open(path, "w") as fh:
        fh.write("# trial init_x init_y init_theta residual_x residual_y residual_theta "
                 "graph_x graph_y graph_theta\n")
        for trial, row in sorted(by_trial.items()):
            values = (*row["initial"], *row.get(Backend.RESIDUAL, nan),
                      *row.get(Backend.GRAPH, nan))
            fh.write(" ".join([str(trial)] + [repr(float(v)) for v in values]) + "\n")


def format_summary(summary: BenchSummary, with_theta: bool = False) -> str:
    label = "RMSE (x, y, theta)" if with_theta else "RMSE (m)"
    lines = [f"{'backend':<10}{label:>20}{'mean iters':>12}{'mean ms':>10}{'converged':>11}"]
    for backend, s in summary.per_backend.items():
        n = sum(r.backend is backend for r in summary.records)
        lines.append(f"{backend.value:<10}{s.rmse:>20.5f}{s.mean_iterations:>12.2f}"
                     f"{s.mean_time_ms:>10.3f}{s.converged:>7d}/{n}")
    if summary.compared:
        lines.append(f"final costs agree on {summary.compared - len(summary.disagreements)}"
                     f"/{summary.compared} trials")
    return "\n".join(lines)


def run_benchmark(config: BenchConfig, out_path, dump_poses=None, rmse_with_theta=False,
                  stream=None) -> BenchSummary:
    """Run every (trial, backend) pair, write the CSV and print a summary.

    Only the ``match`` call is timed. Trials run sequentially so that timings
    are not distorted by contention; rows are written in trial order.
    """
    stream = sys.stdout if stream is None else stream
    # Fail on an unwritable path before spending time on trials.
    open(out_path, "w").close()
    warm_up()
    records = []
    for index in range(int(config.trials)):
        records.extend(run_trial(config, index))
    write_csv(records, out_path)
    if dump_poses is not None:
        write_pose_dump(records, dump_poses)
    summary = summarize(records, config, rmse_with_theta)
    print(format_summary(summary, rmse_with_theta), file=stream)
    return summary


__all__ = [
    "CSV_HEADER",
    "BenchConfig",
    "BenchSummary",
    "BackendSummary",
    "Disagreement",
    "TrialRecord",
    "costs_agree",
    "format_summary",
    "generate_trial",
    "rmse",
    "run_benchmark",
    "run_trial",
    "summarize",
    "write_csv",
    "write_pose_dump",
]
