"""Problem generators, baseline calibration, and the benchmark runner.

Everything here is seed-deterministic: a (seed, config) pair fixes every
generated instance, every optimization trajectory, and every report byte
except wall-clock timings, which are excluded from content hashes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import cost as cost_mod
from . import geom
from . import oracle
from .cost import ChompParams, CostParams
from .geom import Box, PlanningProblem, Scene, Sphere
from .optimizer import OptimizerConfig, minimize_chomp, optimize_path, refine_collision_only
from .regressor import MlpNet, ProblemSample, vectorize_scene
from .spline import straight_line_spline, sample_path

DEFAULT_OUT_ENV = "SPLINEPLAN_OUT"

METHODS = (
    "ours-direct",
    "chomp-calibrated",
    "chomp-uncalibrated",
    "ours-network",
    "ours-network+refine",
)

UNCALIBRATED = ChompParams(collision_weight=1.0, clearance=1.0)


class HarnessError(RuntimeError):
    """Configuration or generation failure in the benchmark harness."""


class CalibrationError(HarnessError):
    """No baseline parameter candidate produced a collision-free optimum."""


def default_out_dir() -> str:
    return os.environ.get(DEFAULT_OUT_ENV, "out")


# canonical serialization ----------------------------------------------------------

_TIMING_KEYS = {"wall_ms", "wall_time_s", "mean_wall_ms", "mean_inference_s", "timestamp"}


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def strip_timing(payload):
    """Recursively drop wall-clock fields so content hashes are stable."""
    if isinstance(payload, dict):
        return {k: strip_timing(v) for k, v in payload.items() if k not in _TIMING_KEYS}
    if isinstance(payload, list):
        return [strip_timing(v) for v in payload]
    return payload


def content_hash(payload) -> str:
    return hashlib.sha256(canonical_json(strip_timing(payload)).encode()).hexdigest()


# straight-line flags ---------------------------------------------------------------


def straight_line_collides(problem: PlanningProblem, step: float, n_anchors: int = 1, degree: int = 2) -> bool:
    straight = straight_line_spline(problem.start, problem.goal, n_anchors, degree)
    samples = sample_path(straight, step)
    return bool((geom.min_sdf_points(problem.scene, samples.points) < 0.0).any())


# simple 2-D instances ---------------------------------------------------------------

SIMPLE2D_CHECK_STEP = 0.005  # dense flag sampling on the unit square
_FEASIBILITY_STEP = 0.005
_FEASIBILITY_CLEARANCE = 0.01  # some one-anchor path must clear obstacles by this much


def _simple2d_scene(rng: np.random.Generator) -> Scene:
    sphere = Sphere(center=rng.uniform(0.2, 0.8, 2), radius=rng.uniform(0.1, 0.22))
    box = Box(center=rng.uniform(0.2, 0.8, 2), half_extents=rng.uniform(0.08, 0.22, 2))
    return Scene(obstacles=(box, sphere), bounds_min=(0.0, 0.0), bounds_max=(1.0, 1.0))


def simple2d_scene_source(rng: np.random.Generator) -> Scene:
    """Scene distribution used for regressor training: one box, one sphere."""
    return _simple2d_scene(rng)


def scaled_simple2d_source(scale: float):
    """Same one-box-one-sphere family, uniformly scaled.

    Geometrically identical to the unit-square distribution (success is a
    scale-invariant event), but the collision penalty grows with obstacle
    circumference while length gradients do not, so larger scenes give the
    unsupervised trainer a usable avoidance signal; the sigmoid step has a
    fixed unit width.
    """

    def source(rng: np.random.Generator) -> Scene:
        scene = _simple2d_scene(rng)
        return Scene(
            obstacles=tuple(
                Sphere(center=o.center * scale, radius=o.radius * scale)
                if isinstance(o, Sphere)
                else Box(center=o.center * scale, half_extents=o.half_extents * scale)
                for o in scene.obstacles
            ),
            bounds_min=scene.bounds_min * scale,
            bounds_max=scene.bounds_max * scale,
        )

    return source


def _one_anchor_feasible(problem: PlanningProblem, degree: int, resolution: int) -> bool:
    """Does some one-anchor path clear every obstacle with real margin?

    Checked on a coarse anchor grid at dense sampling; the clearance
    requirement rejects instances whose only free paths thread sub-cell
    gaps, which no judging resolution could certify.
    """
    grid = oracle.GridSpec.from_scene(problem.scene, resolution)
    metrics = oracle.anchor_batch_metrics(
        problem, CostParams(step=_FEASIBILITY_STEP), grid.nodes(), degree=degree
    )
    return bool((metrics["min_sdf"] >= _FEASIBILITY_CLEARANCE).any())


def gen_simple2d(
    seed: int,
    count: int,
    *,
    degree: int = 2,
    feasibility_resolution: int = 41,
    budget: int = 10_000,
) -> list:
    """Blocked planning problems on the unit square, one box plus one sphere.

    Every instance has collision-free endpoints whose straight connection
    collides with at least one obstacle, and admits a collision-free
    one-anchor path (verified on a coarse anchor grid), so the reference
    planners have something to find.  Deterministic per (seed, index).
    """
    if count < 1:
        raise HarnessError("need at least one instance")
    problems = []
    for index in range(count):
        rng = np.random.default_rng((seed, index))
        found = False
        for _ in range(budget):
            scene = _simple2d_scene(rng)
            for _ in range(40):
                start = rng.uniform(0.02, 0.98, 2)
                goal = rng.uniform(0.02, 0.98, 2)
                if np.linalg.norm(goal - start) < 0.35:
                    continue
                if geom.min_sdf_points(scene, np.vstack([start, goal])).min() <= 0.01:
                    continue
                problem = PlanningProblem(scene=scene, start=start, goal=goal)
                if not straight_line_collides(problem, SIMPLE2D_CHECK_STEP):
                    continue
                if not _one_anchor_feasible(problem, degree, feasibility_resolution):
                    continue
                problems.append(problem)
                found = True
                break
            if found:
                break
        if not found:
            raise HarnessError(f"instance {index}: generation budget exhausted")
    return problems


# 3-D box world ----------------------------------------------------------------------

BOXWORLD_EXTENT = 20.0
BOXWORLD_SIDES = (5.0, 10.0)
BOXWORLD_COUNT = 10
BOXWORLD_CHECK_STEP = 0.05


def _boxworld_scene(rng: np.random.Generator) -> Scene:
    obstacles = []
    for _ in range(BOXWORLD_COUNT):
        half = rng.choice(BOXWORLD_SIDES, size=3) / 2.0
        center = rng.uniform(0.0, BOXWORLD_EXTENT, 3)
        obstacles.append(Box(center=center, half_extents=half))
    return Scene(
        obstacles=tuple(obstacles),
        bounds_min=(0.0, 0.0, 0.0),
        bounds_max=(BOXWORLD_EXTENT,) * 3,
    )


def boxworld_scene_source(rng: np.random.Generator) -> Scene:
    return _boxworld_scene(rng)


def gen_boxworld3d(
    seed: int,
    count: int,
    *,
    collide_fraction: float = 0.5,
    budget: int = 10_000,
) -> list:
    """Cluttered 3-D scenes: ten axis-aligned boxes with sides 5 or 10.

    Endpoints are collision-free; whether the straight connection collides
    follows the requested mixture by deterministic alternation over the
    instance index.
    """
    if count < 1:
        raise HarnessError("need at least one instance")
    problems = []
    for index in range(count):
        rng = np.random.default_rng((seed, index))
        want = int(np.floor((index + 1) * collide_fraction)) - int(
            np.floor(index * collide_fraction)
        ) >= 1
        found = False
        for _ in range(budget):
            scene = _boxworld_scene(rng)
            for _ in range(60):
                start = rng.uniform(scene.bounds_min, scene.bounds_max)
                goal = rng.uniform(scene.bounds_min, scene.bounds_max)
                if np.linalg.norm(goal - start) < 0.25 * BOXWORLD_EXTENT:
                    continue
                if geom.min_sdf_points(scene, np.vstack([start, goal])).min() <= 0.1:
                    continue
                problem = PlanningProblem(scene=scene, start=start, goal=goal)
                if straight_line_collides(problem, BOXWORLD_CHECK_STEP) != want:
                    continue
                problems.append(problem)
                found = True
                break
            if found:
                break
        if not found:
            raise HarnessError(f"instance {index}: generation budget exhausted")
    return problems


# baseline calibration ----------------------------------------------------------------

CALIBRATION_LAMBDAS = tuple(0.1 * 2.0**k for k in range(11))
CALIBRATION_EPSILONS = (0.05, 0.1, 0.2, 0.5, 1.0)


def calibration_problem() -> PlanningProblem:
    """Canonical sphere-blocking instance used to calibrate the baseline.

    A centered sphere squarely blocks the straight connection; the box sits
    in a far corner where it does not interfere.
    """
    scene = Scene(
        obstacles=(
            Box(center=(0.12, 0.88), half_extents=(0.05, 0.05)),
            Sphere(center=(0.5, 0.5), radius=0.15),
        ),
        bounds_min=(0.0, 0.0),
        bounds_max=(1.0, 1.0),
    )
    return PlanningProblem(scene=scene, start=(0.08, 0.5), goal=(0.92, 0.5))


def calibrate_chomp(
    problem: PlanningProblem,
    cost_params: CostParams,
    *,
    lambdas=CALIBRATION_LAMBDAS,
    epsilons=CALIBRATION_EPSILONS,
    grid_resolution: int = 101,
    degree: int = 2,
):
    """Grid-search the baseline weights on one instance.

    Each candidate is brute-force optimized; among candidates whose optimum
    is collision-free, the one whose optimal length lands closest to the
    reference cost's optimal length wins.  Returns the parameters plus a
    calibration record (including whether the match fell within 2 percent).
    """
    grid = oracle.GridSpec.from_scene(problem.scene, grid_resolution)
    ours = oracle.brute_force_optimum(problem, cost_params, grid, degree=degree)
    target_length = ours.best_length
    best = None
    attempts = []
    for eps in epsilons:
        for lam in lambdas:
            params = ChompParams(collision_weight=lam, clearance=eps)
            result = oracle.brute_force_optimum(
                problem,
                cost_params,
                grid,
                degree=degree,
                objective="chomp",
                chomp_params=params,
            )
            attempts.append(
                {
                    "collision_weight": lam,
                    "clearance": eps,
                    "collides": result.best_collides,
                    "length": result.best_length,
                }
            )
            if result.best_collides:
                continue
            gap = abs(result.best_length - target_length)
            if best is None or gap < best[0]:
                best = (gap, params, result.best_length)
    if best is None:
        raise CalibrationError(
            f"no candidate produced a collision-free optimum; tried {len(attempts)}"
        )
    gap, params, achieved = best
    record = {
        "collision_weight": params.collision_weight,
        "clearance": params.clearance,
        "target_length": target_length,
        "achieved_length": achieved,
        "relative_gap": gap / target_length if target_length > 0 else 0.0,
        "within_2_percent": bool(gap <= 0.02 * target_length),
        "candidates_tried": len(attempts),
    }
    return params, record


# benchmark ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchConfig:
    dataset: str = "simple2d"
    count: int = 150
    seed: int = 0
    methods: tuple = ("ours-direct", "chomp-calibrated", "chomp-uncalibrated")
    n_anchors: int = 1
    degree: int = 2
    step: float = 0.01
    safe_distance: float = 0.0
    restarts: int = 5
    max_iterations: int = 2000
    learning_rate: float | None = None
    weight_mode: str = "fixed"
    collide_fraction: float = 1.0
    calibration_resolution: int = 101
    baseline_resolution: int = 101
    refine_steps: int = 6
    checkpoint: str | None = None

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "count": self.count,
            "seed": self.seed,
            "methods": list(self.methods),
            "n_anchors": self.n_anchors,
            "degree": self.degree,
            "step": self.step,
            "safe_distance": self.safe_distance,
            "restarts": self.restarts,
            "max_iterations": self.max_iterations,
            "learning_rate": self.learning_rate,
            "weight_mode": self.weight_mode,
            "collide_fraction": self.collide_fraction,
            "calibration_resolution": self.calibration_resolution,
            "baseline_resolution": self.baseline_resolution,
            "refine_steps": self.refine_steps,
            "checkpoint": self.checkpoint,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BenchConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        if "methods" in known:
            known["methods"] = tuple(known["methods"])
        return cls(**known)

    @property
    def cost_params(self) -> CostParams:
        return CostParams(step=self.step, safe_distance=self.safe_distance)

    @property
    def dense_params(self) -> CostParams:
        """Judging resolution: twice as fine as the optimization sampling."""
        return CostParams(step=self.step / 2.0, safe_distance=self.safe_distance)


@dataclass
class BenchmarkReport:
    config: dict
    config_hash: str
    rows: list
    records: list
    calibration: dict | None

    def to_json(self) -> dict:
        payload = {
            "config": self.config,
            "config_hash": self.config_hash,
            "rows": self.rows,
            "records": self.records,
            "calibration": self.calibration,
        }
        payload["content_hash"] = content_hash(payload)
        return payload


def _generate_problems(config: BenchConfig) -> list:
    if config.dataset == "simple2d":
        return gen_simple2d(config.seed, config.count, degree=config.degree)
    if config.dataset == "boxworld3d":
        return gen_boxworld3d(
            config.seed, config.count, collide_fraction=config.collide_fraction
        )
    raise HarnessError(f"unknown dataset {config.dataset!r}")


def _judge(problem: PlanningProblem, path, dense: CostParams) -> dict:
    breakdown = cost_mod.total_loss(problem.scene, path, dense)
    success = breakdown.exact_collision == 0.0
    straight = problem.straight_distance
    ratio = breakdown.length / straight if success and straight > 0 else None
    return {"success": bool(success), "length": breakdown.length, "length_ratio": ratio}


def _make_sample(problem: PlanningProblem, net: MlpNet, config: BenchConfig) -> ProblemSample:
    return ProblemSample(
        scene=problem.scene,
        descriptor=vectorize_scene(problem.scene, net.config.k_max),
        start=problem.start,
        goal=problem.goal,
        straight_line_collides=True,
    )


def _chomp_path(problem, config: BenchConfig, chomp: ChompParams, opt_config):
    """Best baseline path: global grid search where brute force is tractable.

    One-anchor 2-D instances are solved exhaustively (the baseline gets its
    global optimum, a strictly stronger treatment than our local descent);
    everything else falls back to the shared gradient machinery.
    """
    if problem.scene.dim == 2 and config.n_anchors == 1:
        grid = oracle.GridSpec.from_scene(problem.scene, config.baseline_resolution)
        result = oracle.brute_force_optimum(
            problem,
            config.cost_params,
            grid,
            degree=config.degree,
            objective="chomp",
            chomp_params=chomp,
        )
        template = straight_line_spline(
            problem.start, problem.goal, 1, config.degree
        )
        return template.with_anchors(result.best_anchor[None, :])
    return minimize_chomp(problem, config.cost_params, chomp, opt_config).path


def run_benchmark(config: BenchConfig, out_dir: str | None = None) -> BenchmarkReport:
    """Run every configured method on the generated problem set.

    Success is judged by the exact indicator cost at twice the sampling
    resolution.  A method crash on one problem is recorded as a failure for
    that problem and the run continues.  Results are merged per method in
    problem-id order, so reports are reproducible byte for byte (timings
    aside).
    """
    if not config.methods:
        raise HarnessError("benchmark needs at least one method")
    for method in config.methods:
        if method not in METHODS:
            raise HarnessError(f"unknown method {method!r}; pick from {METHODS}")
    problems = _generate_problems(config)
    dense = config.dense_params
    opt_config = OptimizerConfig(
        n_anchors=config.n_anchors,
        degree=config.degree,
        learning_rate=config.learning_rate,
        max_iterations=config.max_iterations,
        restarts=config.restarts,
        weight_mode=config.weight_mode,
        seed=config.seed,
    )

    calibration = None
    chomp_by_method = {}
    if "chomp-calibrated" in config.methods:
        params, calibration = calibrate_chomp(
            calibration_problem(),
            config.cost_params,
            grid_resolution=config.calibration_resolution,
            degree=config.degree,
        )
        chomp_by_method["chomp-calibrated"] = params
    if "chomp-uncalibrated" in config.methods:
        chomp_by_method["chomp-uncalibrated"] = UNCALIBRATED

    net = None
    if any(m.startswith("ours-network") for m in config.methods):
        if not config.checkpoint:
            raise HarnessError("network methods need a checkpoint path")
        net = MlpNet.load(config.checkpoint)

    records = []
    for method in config.methods:
        for problem_id, problem in enumerate(problems):
            begin = time.perf_counter()
            record = {
                "method": method,
                "problem_id": problem_id,
                "seed": config.seed,
                "success": False,
                "length": None,
                "length_ratio": None,
            }
            try:
                if method == "ours-direct":
                    result = optimize_path(problem, config.cost_params, opt_config)
                    record.update(_judge(problem, result.path, dense))
                elif method in chomp_by_method:
                    path = _chomp_path(problem, config, chomp_by_method[method], opt_config)
                    record.update(_judge(problem, path, dense))
                elif method == "ours-network":
                    path = net.forward(_make_sample(problem, net, config))
                    record.update(_judge(problem, path, dense))
                elif method == "ours-network+refine":
                    path = net.forward(_make_sample(problem, net, config))
                    refined = refine_collision_only(
                        path, problem.scene, config.cost_params, config.refine_steps
                    )
                    record.update(_judge(problem, refined.path, dense))
            except Exception as err:  # crash counts as failure, run continues
                record["error"] = f"{type(err).__name__}: {err}"
            record["wall_ms"] = (time.perf_counter() - begin) * 1000.0
            records.append(record)

    rows = []
    for method in config.methods:
        mine = [r for r in records if r["method"] == method]
        successes = [r for r in mine if r["success"]]
        ratios = [r["length_ratio"] for r in successes if r["length_ratio"] is not None]
        rows.append(
            {
                "method": method,
                "problem_count": len(mine),
                "success_rate": len(successes) / len(mine) if mine else 0.0,
                "mean_length_ratio": float(np.mean(ratios)) if ratios else None,
                "mean_wall_ms": float(np.mean([r["wall_ms"] for r in mine])) if mine else None,
            }
        )

    report = BenchmarkReport(
        config=config.to_json(),
        config_hash=hashlib.sha256(canonical_json(config.to_json()).encode()).hexdigest(),
        rows=rows,
        records=records,
        calibration=calibration,
    )
    if out_dir:
        write_report(report, out_dir)
    return report


def write_report(report: BenchmarkReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
    with open(os.path.join(out_dir, "report.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "problem_id", "success", "length", "length_ratio", "wall_ms", "seed"]
        )
        for r in report.records:
            writer.writerow(
                [
                    r["method"],
                    r["problem_id"],
                    int(r["success"]),
                    "" if r["length"] is None else repr(r["length"]),
                    "" if r["length_ratio"] is None else repr(r["length_ratio"]),
                    repr(r["wall_ms"]),
                    r["seed"],
                ]
            )


def problems_to_json(problems: list) -> list:
    return [geom.problem_to_json(p) for p in problems]


def problems_from_json(data: list) -> list:
    return [geom.problem_from_json(p) for p in data]
