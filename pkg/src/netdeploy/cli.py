"""Command-line interface: run deployments, validate networks, generate the
benchmark scenario, and check gradients against finite differences.

Exit codes: 0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import NetdeployError, ScenarioError
from .network import network_from_dict, validate_network
from .optimizer import run_step1, run_step2, spread_and_project, _seed_children
from .render import emit_svg, save_report_figure
from .scenario import (benchmark_scenario, load_scenario, save_network,
                       scenario_to_dict, write_trace)
from .voronoi import SensorSet, clip_network_cells

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _cmd_validate(args) -> int:
    try:
        with open(args.network) as fh:
            data = json.load(fh)
        net = network_from_dict(data)
    except (OSError, json.JSONDecodeError, NetdeployError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    violations = validate_network(net)
    if violations:
        for v in violations:
            print(v)
        return EXIT_VALIDATION
    print(f"network valid: {net.vertex_count} vertices, {net.segment_count} segments")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = benchmark_scenario(args.seed)
    save_network(cfg.network, out / "network.json")
    data = scenario_to_dict(cfg)
    data["network"] = {"file": "network.json"}
    (out / "scenario.json").write_text(json.dumps(data, indent=2) + "\n")
    print(f"benchmark scenario written to {out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg.pipeline = dataclasses.replace(cfg.pipeline, rng_seed=args.seed)
    out = Path(args.out) if args.out else Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    svg = args.svg or cfg.output.svg
    performance = cfg.performance_for_runs()

    step1_trace = step2_trace = None
    final = None
    if args.step in ("1", "both"):
        centers, step1_trace = run_step1(cfg.pipeline, cfg.network, cfg.density,
                                         performance)
        write_trace(step1_trace, out / "step1_trace.csv")
        if svg:
            emit_svg(cfg.network, cfg.density, SensorSet(
                [[c.x, c.y] for c in centers]), out / "step1_final.svg",
                sensing_radius=cfg.pipeline.radius_final, show_density=True)
        if args.step == "1":
            print(f"step 1 done: H {step1_trace.rows[0].h_value:.6g} -> "
                  f"{step1_trace.rows[-1].h_value:.6g}")
    if args.step in ("2", "both"):
        if args.step == "2":
            # Step 2 alone still derives its start deterministically from step 1.
            centers, _ = run_step1(cfg.pipeline, cfg.network, cfg.density, performance)
        initial = spread_and_project(cfg.network, centers,
                                     cfg.pipeline.sensors_per_cluster,
                                     cfg.pipeline.spread_radius,
                                     _seed_children(cfg.pipeline.rng_seed)[2])
        final, step2_trace = run_step2(cfg.pipeline, cfg.network, cfg.density,
                                       initial, performance)
        write_trace(step2_trace, out / "step2_trace.csv")
        if svg:
            cells = clip_network_cells(cfg.network, final)
            emit_svg(cfg.network, cfg.density, final, out / "step2_final.svg",
                     sensing_radius=cfg.pipeline.radius_final, cells=cells,
                     show_density=True)
        print(f"step 2 done: H {step2_trace.rows[0].h_value:.6g} -> "
              f"{step2_trace.rows[-1].h_value:.6g}")
    if cfg.output.figures:
        save_report_figure(step1_trace, step2_trace, cfg.network, final,
                           out / "report.png")
    print(f"outputs written to {out}")
    return EXIT_OK


def _cmd_check_gradients(args) -> int:
    from .diagnostics import check_gradients
    from .objective import tanh_profile

    cfg = load_scenario(args.scenario)
    performance = cfg.performance_for_runs()
    f = performance if performance is not None else tanh_profile(cfg.pipeline.radius_final)
    full_samples = args.full_samples if args.full_samples is not None else args.samples
    errors = check_gradients(cfg.network, cfg.density, f, cfg.pipeline.r_collapse,
                             args.samples, seed=cfg.pipeline.rng_seed,
                             full_samples=full_samples)
    worst = 0.0
    for mode, err in errors.items():
        print(f"{mode}: max relative error {err:.3e}")
        worst = max(worst, err)
    print(f"overall max relative error {worst:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netdeploy",
        description="Voronoi gradient-ascent sensor deployment on planar networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the two-step deployment pipeline")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--step", choices=["1", "2", "both"], default="both")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--svg", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a network file")
    p_val.add_argument("--network", required=True)
    p_val.set_defaults(fn=_cmd_validate)

    p_bench = sub.add_parser("benchmark", help="write the benchmark scenario")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(fn=_cmd_benchmark)

    p_check = sub.add_parser("check-gradients",
                             help="compare derivatives against finite differences")
    p_check.add_argument("--scenario", required=True)
    p_check.add_argument("--samples", type=int, default=100)
    p_check.add_argument("--full-samples", type=int, default=None,
                         help="sample count for the full-network mode")
    p_check.set_defaults(fn=_cmd_check_gradients)
    return parser


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NetdeployError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
