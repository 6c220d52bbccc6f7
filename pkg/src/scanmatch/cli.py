"""``scanmatch`` command line: ``bench`` and ``sim`` subcommands."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import BenchConfig, run_benchmark
from .matcher import Backend
from .sim import ScenarioError, load_scenario, run_mapping
from .solvers import SolverOptions


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanmatch", description="Scan matching benchmark and mapping simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="seeded synthetic benchmark of both backends")
    bench.add_argument("--seed", type=_u64, default=42)
    bench.add_argument("--trials", type=_positive_int, default=20)
    bench.add_argument("--points", type=_positive_int, default=5)
    bench.add_argument("--backend", choices=["residual", "graph", "both"], default="both")
    bench.add_argument("--tolerance", type=_positive_float, default=1e-10,
                       help="function and gradient tolerance")
    bench.add_argument("--max-iterations", type=_positive_int, default=100)
    bench.add_argument("--out", required=True, help="CSV output path")
    bench.add_argument("--dump-poses", metavar="PATH",
                       help="also write initial and estimated poses per trial")
    bench.add_argument("--rmse-with-theta", action="store_true",
                       help="include the heading error in the RMSE")

    sim = sub.add_parser("sim", help="incremental mapping run over a scenario file")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--backend", choices=["residual", "graph"], default="residual")
    sim.add_argument("--out", required=True, help="output prefix")
    sim.add_argument("--max-total-match-ms", type=_positive_float, default=None,
                     help="stop matching once this much match time has been spent")
    return parser


def _bench(args) -> int:
    backends = ((Backend.RESIDUAL, Backend.GRAPH) if args.backend == "both"
                else (Backend(args.backend),))
    options = SolverOptions(max_iterations=args.max_iterations,
                            function_tolerance=args.tolerance,
                            gradient_tolerance=args.tolerance)
    config = BenchConfig(seed=args.seed, trials=args.trials, points_per_cloud=args.points,
                         backends=backends, options=options)
    run_benchmark(config, args.out, args.dump_poses, args.rmse_with_theta)
    return 0


def _sim(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_mapping(scenario, args.backend, args.out, args.max_total_match_ms)
    matched = [r for r in result.reports[1:] if r.iterations > 0]
    print(f"scans: {len(result.estimates)}  matched: {len(matched)}")
    print(f"max pose error: {result.max_translation_error:.6f} m, "
          f"{result.max_rotation_error:.6f} rad")
    print(f"total match time: {result.cumulative_match_ms[-1]:.3f} ms")
    print(f"wrote {args.out}_map.pgm and {args.out}_trajectory.csv")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _bench(args) if args.command == "bench" else _sim(args)
    except ScenarioError as exc:
        print(f"scanmatch: scenario error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"scanmatch: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
