"""Command-line interface: generate, plan, train, evaluate, benchmark, render.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import geom, harness, oracle, regressor
from .cost import CostParams
from .harness import BenchConfig, default_out_dir
from .optimizer import OptimizerConfig, optimize_path
from .render import render_svg


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _load_problems(path: str) -> list:
    with open(path) as fh:
        return harness.problems_from_json(json.load(fh))


def _out_dir(args) -> str:
    out = args.out or default_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _cost_params(args) -> CostParams:
    return CostParams(step=args.step, safe_distance=args.safe_distance)


# subcommands ---------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.dataset == "simple2d":
        problems = harness.gen_simple2d(args.seed, args.count)
    else:
        problems = harness.gen_boxworld3d(
            args.seed, args.count, collide_fraction=args.collide_fraction
        )
    out = os.path.join(_out_dir(args), f"{args.dataset}_problems.json")
    with open(out, "w") as fh:
        json.dump(harness.problems_to_json(problems), fh, indent=2)
    print(f"wrote {len(problems)} problems to {out}")
    return 0


def cmd_plan(args) -> int:
    problems = _load_problems(args.problems)
    problem = problems[args.index]
    config = OptimizerConfig(
        n_anchors=args.n_anchors,
        degree=args.degree,
        restarts=args.restarts,
        max_iterations=args.max_iterations,
        seed=args.seed,
        weight_mode=args.weight_mode,
    )
    result = optimize_path(problem, _cost_params(args), config)
    out = os.path.join(_out_dir(args), f"plan_{args.index}.json")
    with open(out, "w") as fh:
        json.dump(result.to_json(), fh, indent=2)
    print(
        f"problem {args.index}: success={result.success}"
        f" length={result.breakdown.length:.4f} -> {out}"
    )
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    checkpoint = os.path.join(out, "checkpoint.npz")
    trace = os.path.join(out, "trace.csv")
    config = regressor.TrainConfig(
        scene_source=harness.simple2d_scene_source,
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        k_max=2,
        n_anchors=args.n_anchors,
        degree=args.degree,
        cost_params=_cost_params(args),
        trunk_width=args.trunk_width,
        highway_layers=args.highway_layers,
        checkpoint_path=checkpoint,
        trace_path=trace,
    )
    net, trace_rows = regressor.train(config)
    first = np.mean([r[1] for r in trace_rows[: max(1, len(trace_rows) // 10)]])
    last = np.mean([r[1] for r in trace_rows[-max(1, len(trace_rows) // 10) :]])
    print(
        f"trained {args.steps} steps ({net.parameter_count} parameters);"
        f" loss {first:.4f} -> {last:.4f}; checkpoint {checkpoint}"
    )
    return 0


def cmd_eval(args) -> int:
    net = regressor.MlpNet.load(args.checkpoint)
    cost_params = _cost_params(args)
    problems = [
        regressor.sample_problem(
            harness.simple2d_scene_source,
            args.collide_fraction,
            10**9 + args.seed * 10**6 + i,
            n_anchors=net.config.n_anchors,
            degree=net.config.degree,
            cost_params=cost_params,
            k_max=net.config.k_max,
        )
        for i in range(args.count)
    ]
    metrics = regressor.evaluate(net, problems, cost_params)
    out = os.path.join(_out_dir(args), "eval.json")
    with open(out, "w") as fh:
        json.dump(metrics, fh, indent=2)
    print(
        f"success {metrics['success_rate']:.3f} over {metrics['count']} problems,"
        f" mean ratio {metrics['mean_length_ratio']},"
        f" {metrics['mean_inference_s'] * 1000:.2f} ms/forward -> {out}"
    )
    return 0


def cmd_bench(args) -> int:
    if args.config:
        with open(args.config) as fh:
            config = BenchConfig.from_json(json.load(fh))
    else:
        config = BenchConfig(seed=args.seed)
    out = _out_dir(args)
    report = harness.run_benchmark(config, out_dir=out)
    for row in report.rows:
        ratio = row["mean_length_ratio"]
        print(
            f"{row['method']:>22}: success {row['success_rate']:.4f}"
            f" ratio {ratio if ratio is None else f'{ratio:.4f}'}"
            f" over {row['problem_count']} problems"
        )
    print(f"report in {out}")
    return 0


def cmd_render(args) -> int:
    problems = _load_problems(args.problems)
    problem = problems[args.index]
    paths = []
    if args.plan:
        config = OptimizerConfig(
            n_anchors=args.n_anchors, degree=args.degree, seed=args.seed
        )
        result = optimize_path(problem, _cost_params(args), config)
        paths.append(("optimized", result.path))
    heatmap = None
    out_dir = _out_dir(args)
    if args.heatmap:
        grid = oracle.GridSpec.from_scene(problem.scene, args.resolution)
        chomp = harness.UNCALIBRATED if args.heatmap == "chomp" else None
        raster = oracle.cost_heatmap(
            problem, args.heatmap, grid, _cost_params(args), chomp_params=chomp
        )
        heatmap = raster["values"]
        base = os.path.join(out_dir, f"problem_{args.index}_{args.heatmap}")
        oracle.raster_to_pgm(heatmap, base + ".pgm")
        oracle.raster_to_json(heatmap, base + ".json")
    out = os.path.join(out_dir, f"problem_{args.index}.svg")
    render_svg(problem, paths, out, heatmap=heatmap)
    print(f"wrote {out}")
    return 0


def cmd_verify(args) -> int:
    problems = harness.gen_simple2d(args.seed, args.instances)
    cost_params = _cost_params(args)
    reports = []
    total = {"mp_violations": 0, "np_violations": 0, "gp_violations": 0}
    for index, problem in enumerate(problems):
        grid = oracle.GridSpec.from_scene(problem.scene, args.resolution)
        optimum = oracle.brute_force_optimum(
            problem, cost_params, grid, objective="exact"
        )
        report = oracle.verify_properties(
            problem, optimum, cost_params, args.trials, seed=args.seed * 7919 + index
        )
        reports.append(report)
        for key in total:
            total[key] += report[key]
    payload = {"instances": reports, "totals": total, "seed": args.seed}
    out = os.path.join(_out_dir(args), "verify.json")
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(
        f"{args.instances} instances x {args.trials} trials:"
        f" mp={total['mp_violations']} np={total['np_violations']}"
        f" gp={total['gp_violations']} -> {out}"
    )
    return 0 if all(v == 0 for v in total.values()) else 2


def cmd_gradcheck(args) -> int:
    from . import autodiff as ad
    from . import cost as cost_mod
    from .spline import straight_line_spline

    rng = np.random.default_rng(args.seed)
    cost_params = CostParams(step=0.05, safe_distance=0.1)
    worst = 0.0
    checked = 0
    while checked < args.samples:
        scene = harness.simple2d_scene_source(rng)
        template = straight_line_spline(rng.uniform(0, 1, 2), rng.uniform(0, 1, 2), 3, 2)
        path = template.with_anchors(rng.uniform(0, 1, (3, 2)))
        samples = cost_mod.sample_path(path, cost_params.step)
        if cost_mod.branch_margin(scene, samples.points) < 1e-3:
            continue
        checked += 1
        error = ad.grad_check(
            lambda xs: cost_mod.generic_smooth_loss(scene, path, cost_params, xs),
            path.anchors.ravel(),
            h=1e-5,
        )
        worst = max(worst, error)
    print(f"max relative gradient error over {checked} configurations: {worst:.3e}")
    return 0 if worst < 1e-4 else 2


# parser --------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="splineplan", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--step", type=float, default=0.01, help="cost sampling step")
        p.add_argument("--safe-distance", type=float, default=0.0)

    p = sub.add_parser("gen", help="generate planning problems")
    common(p)
    p.add_argument("--dataset", choices=("simple2d", "boxworld3d"), default="simple2d")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--collide-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("plan", help="optimize one problem")
    common(p)
    p.add_argument("--problems", required=True, help="problems JSON file")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--n-anchors", type=int, default=1)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--max-iterations", type=int, default=2000)
    p.add_argument("--weight-mode", choices=("fixed", "trainable"), default="fixed")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("train", help="train the path regression network")
    common(p)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--n-anchors", type=int, default=3)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--trunk-width", type=int, default=256)
    p.add_argument("--highway-layers", type=int, default=4)
    p.set_defaults(func=cmd_train, step=0.025)

    p = sub.add_parser("eval", help="evaluate a trained network")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--collide-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_eval, step=0.025)

    p = sub.add_parser("bench", help="run the benchmark suite")
    common(p)
    p.add_argument("--config", default=None, help="benchmark config JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="render a problem to SVG")
    common(p)
    p.add_argument("--problems", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--plan", action="store_true", help="overlay an optimized path")
    p.add_argument("--heatmap", choices=("smooth", "exact", "chomp"), default=None)
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--n-anchors", type=int, default=1)
    p.add_argument("--degree", type=int, default=2)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("verify", help="run the optimality property suite")
    common(p)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--resolution", type=int, default=201)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument("--samples", type=int, default=50)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return int(args.func(args) or 0)
    except UsageError:
        return 1
    except Exception as err:
        sys.stderr.write(f"splineplan {args.command}: {type(err).__name__}: {err}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
