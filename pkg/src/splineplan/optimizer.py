"""Direct minimization of the path cost over spline anchors and weights.

Adaptive-moment gradient descent with seeded random restarts.  Restart 0
starts from the straight line; later restarts perturb it with Gaussian
noise scaled to the scene diagonal.  The reported result is always the
best iterate encountered (by success, then smooth total), never a worse
final iterate.  A collision-only variant freezes the length term and runs
a fixed number of steps, for test-time correction of regressed paths.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import cost as cost_mod
from .autodiff import NumericError
from .cost import ChompParams, CostBreakdown, CostParams
from .geom import PlanningProblem, Scene
from .spline import SplinePath, path_to_json, straight_line_spline

DIAGONAL_RATE = 0.05  # default learning rate as a fraction of the scene diagonal
RESTART_NOISE = 0.10  # restart perturbation sigma as a fraction of the diagonal


@dataclass(frozen=True)
class OptimizerConfig:
    n_anchors: int = 3
    degree: int = 2
    learning_rate: float | None = None  # None: DIAGONAL_RATE * scene diagonal
    max_iterations: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    moment_floor: float = 1e-8
    restarts: int = 5
    patience: int = 50
    min_improvement: float = 1e-8
    weight_mode: str = "fixed"  # "fixed" keeps unit weights, "trainable" optimizes them
    gate_step_scale: float = 0.5  # confirm collision-free iterates this much finer; 1 disables
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("moment coefficients must lie in (0, 1)")
        if self.moment_floor <= 0.0:
            raise ValueError("moment floor must be positive")
        if self.restarts < 1:
            raise ValueError("need at least one restart")
        if self.weight_mode not in ("fixed", "trainable"):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if not 0.0 < self.gate_step_scale <= 1.0:
            raise ValueError("gate step scale must lie in (0, 1]")

    def resolve_rate(self, scene: Scene) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DIAGONAL_RATE * scene.diagonal

    def gate_params(self, params: CostParams) -> CostParams | None:
        if self.gate_step_scale >= 1.0:
            return None
        return CostParams(
            step=params.step * self.gate_step_scale, safe_distance=params.safe_distance
        )


@dataclass(frozen=True)
class PlanResult:
    path: SplinePath
    breakdown: CostBreakdown
    iterations: int
    restart_index: int
    wall_time_s: float
    success: bool

    def to_json(self) -> dict:
        return {
            "path": path_to_json(self.path),
            "breakdown": self.breakdown.to_json(),
            "iterations": self.iterations,
            "restart_index": self.restart_index,
            "wall_time_s": self.wall_time_s,
            "success": self.success,
        }


class AdamState:
    """Bias-corrected first/second moment accumulator for one array."""

    def __init__(self, shape, beta1, beta2, floor):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.floor = floor

    def step(self, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.floor)


def _logit(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, 0.02, 0.98)
    return np.log(w / (1.0 - w))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _descend(scene, template, params, config, rate, *, max_iterations=None):
    """One gradient-descent run; returns the best iterate encountered.

    Iterates are ranked collision-free first, then by smooth total: the
    smooth collision cost drops discontinuously when the last sample leaves
    an obstacle, so descent often settles grazing just inside while
    strictly better collision-free iterates appear transiently along the
    way.  An iterate only counts as free if it also passes the finer
    gate sampling, which keeps reported paths free at the harness's
    judging resolution instead of grazing the sampled boundary.
    """
    trainable = config.weight_mode == "trainable"
    gate = config.gate_params(params)
    anchors = template.anchors.copy()
    logits = _logit(template.weights) if trainable else None
    adam_anchor = AdamState(anchors.shape, config.beta1, config.beta2, config.moment_floor)
    adam_logit = (
        AdamState(logits.shape, config.beta1, config.beta2, config.moment_floor)
        if trainable
        else None
    )
    limit = config.max_iterations if max_iterations is None else max_iterations

    best = None
    best_key = (True, np.inf)
    best_loss = np.inf
    stall = 0
    iterations = 0
    for it in range(limit):
        weights = _sigmoid(logits) if trainable else template.weights
        path = template.with_anchors(anchors, weights)
        breakdown, anchor_grad, weight_grad = cost_mod.loss_and_grad(
            scene, path, params, train_weights=trainable
        )
        loss = breakdown.total_smooth
        if not np.isfinite(loss):
            if it == 0:
                raise NumericError("loss is non-finite at initialization")
            break
        iterations = it + 1
        if loss < best_loss - config.min_improvement:
            stall = 0
        else:
            stall += 1
        best_loss = min(best_loss, loss)
        free = not breakdown.collides
        key = (not free, loss)
        if key < best_key:
            if free and gate is not None:
                free = not cost_mod.total_loss(scene, path, gate).collides
                key = (not free, loss)
            if key < best_key:
                best_key = key
                best = (path, breakdown)
        if stall >= config.patience:
            break
        anchors = anchors - rate * adam_anchor.step(anchor_grad)
        if trainable:
            logit_grad = weight_grad * weights * (1.0 - weights)
            logits = logits - rate * adam_logit.step(logit_grad)
        if not np.all(np.isfinite(anchors)):
            break
    gated_free = not best_key[0]
    return best[0], best[1], iterations, gated_free


def _restart_templates(base, scene, config, restart):
    """Candidate initializations for one restart, best-of-K selected.

    Restart 0 is the plain straight line.  Later restarts mix Gaussian
    perturbations of the straight line (at one and three times the base
    sigma) with anchors drawn uniformly over the scene bounds, and keep the
    candidate whose smooth total is best, collision-free ones first.  The
    pool is deliberately wide: with the safe distance shifting the sigmoid,
    interior collision gradients are weak, so finding a collision-free
    basin falls mostly to initialization.
    """
    if restart == 0:
        return [base]
    rng = np.random.default_rng((config.seed, restart))
    sigma = RESTART_NOISE * scene.diagonal
    shape = base.anchors.shape
    templates = []
    for _ in range(8):
        templates.append(base.with_anchors(base.anchors + rng.normal(0.0, sigma, shape)))
    for _ in range(8):
        templates.append(
            base.with_anchors(base.anchors + rng.normal(0.0, 3.0 * sigma, shape))
        )
    for _ in range(16):
        templates.append(
            base.with_anchors(rng.uniform(scene.bounds_min, scene.bounds_max, shape))
        )
    return templates


def _best_template(templates, value_fn):
    if len(templates) == 1:
        return templates[0]
    scored = []
    for index, template in enumerate(templates):
        scored.append((*value_fn(template), index, template))
    scored.sort(key=lambda c: c[:3])
    return scored[0][-1]


def optimize_path(
    problem: PlanningProblem, cost_params: CostParams, config: OptimizerConfig
) -> PlanResult:
    """Best-of-restarts minimization of the smooth total cost.

    Restarts are ranked success-first (zero exact collision cost at the
    optimization sampling), then by smooth total, then by restart index for
    determinism.  The returned path is always anchored at start and goal.
    """
    scene = problem.scene
    if not (scene.contains(problem.start) and scene.contains(problem.goal)):
        raise ValueError("start and goal must lie inside the scene bounds")
    rate = config.resolve_rate(scene)
    base = straight_line_spline(problem.start, problem.goal, config.n_anchors, config.degree)
    started = time.perf_counter()
    gate = config.gate_params(cost_params) or cost_params

    def score(template):
        breakdown = cost_mod.total_loss(scene, template, gate)
        return (breakdown.collides, breakdown.total_smooth)

    candidates = []
    for restart in range(config.restarts):
        template = _best_template(_restart_templates(base, scene, config, restart), score)
        iterations = 0
        if cost_params.safe_distance > 0.0:
            # graduated stage: the safe distance shifts the sigmoid and
            # shrinks interior gradients by exp(-safe_distance), so escape
            # obstacles under a zero-offset surrogate first
            warm = CostParams(step=cost_params.step, safe_distance=0.0)
            template, _, warm_iters, _ = _descend(scene, template, warm, config, rate)
            iterations += warm_iters
        path, breakdown, extra, gated_free = _descend(scene, template, cost_params, config, rate)
        iterations += extra
        candidates.append(
            (not gated_free, breakdown.total_smooth, restart, path, breakdown, iterations)
        )
    candidates.sort(key=lambda c: c[:3])
    _, _, restart, path, breakdown, iterations = candidates[0]
    if breakdown.exact_collision == 0.0:
        path, breakdown, extra = _polish_free(scene, path, cost_params, config, rate)
        iterations += extra
    return PlanResult(
        path=path,
        breakdown=breakdown,
        iterations=iterations,
        restart_index=restart,
        wall_time_s=time.perf_counter() - started,
        success=breakdown.exact_collision == 0.0,
    )


def _polish_free(scene, path, cost_params, config, rate, max_iterations=400):
    """Shorten a collision-free path without ever leaving the free set.

    Backtracking descent on the length alone; when the straight length
    step runs into an obstacle, the direction is projected onto the
    tangent of the violated constraint (the collision gradient in anchor
    space), so iterates slide along obstacle boundaries toward the taut
    detour instead of stalling at first contact.  Every accepted step is
    collision-free at the sampling step and at the gate resolution.
    """
    gate = config.gate_params(cost_params)
    best = cost_mod.total_loss(scene, path, cost_params)
    step_size = rate
    iterations = 0

    def accept(candidate):
        breakdown = cost_mod.total_loss(scene, candidate, cost_params)
        ok = breakdown.total_smooth < best.total_smooth and not breakdown.collides
        if ok and gate is not None:
            ok = not cost_mod.total_loss(scene, candidate, gate).collides
        return ok, breakdown

    for _ in range(max_iterations):
        _, grad = cost_mod.length_and_grad(path, cost_params)
        norm = float(np.linalg.norm(grad))
        if norm < 1e-12 or step_size < 1e-10:
            break
        direction = -grad / norm
        candidate = path.with_anchors(path.anchors + step_size * direction)
        iterations += 1
        ok, breakdown = accept(candidate)
        if ok:
            path, best = candidate, breakdown
            step_size = min(step_size * 1.4, rate)
            continue
        collided = cost_mod.total_loss(scene, candidate, cost_params).collides
        if collided:
            _, collision_grad, _ = cost_mod.loss_and_grad(
                scene, candidate, cost_params, include_length=False
            )
            c_norm = float(np.linalg.norm(collision_grad))
            if c_norm > 1e-12:
                normal = collision_grad / c_norm
                tangent = direction - float((direction * normal).sum()) * normal
                t_norm = float(np.linalg.norm(tangent))
                if t_norm > 1e-9:
                    slide = path.with_anchors(
                        path.anchors + step_size * tangent / t_norm
                    )
                    ok, breakdown = accept(slide)
                    if ok:
                        path, best = slide, breakdown
                        step_size = min(step_size * 1.4, rate)
                        continue
        step_size *= 0.5
    return path, best, iterations


def minimize_chomp(
    problem: PlanningProblem,
    cost_params: CostParams,
    chomp_params: ChompParams,
    config: OptimizerConfig,
) -> PlanResult:
    """Same restart machinery, minimizing the baseline cost instead.

    Restart ranking uses the baseline objective value; the reported
    breakdown still carries the exact collision verdict for judging.
    """
    scene = problem.scene
    if not (scene.contains(problem.start) and scene.contains(problem.goal)):
        raise ValueError("start and goal must lie inside the scene bounds")
    rate = config.resolve_rate(scene)
    base = straight_line_spline(problem.start, problem.goal, config.n_anchors, config.degree)
    started = time.perf_counter()
    trainable = config.weight_mode == "trainable"

    def score(template):
        # the baseline ranks its own candidates by its own objective
        value = cost_mod.chomp_total_loss(scene, template, cost_params, chomp_params)
        return (False, value)

    candidates = []
    for restart in range(config.restarts):
        template = _best_template(_restart_templates(base, scene, config, restart), score)
        anchors = template.anchors.copy()
        logits = _logit(template.weights) if trainable else None
        adam_anchor = AdamState(anchors.shape, config.beta1, config.beta2, config.moment_floor)
        adam_logit = (
            AdamState(logits.shape, config.beta1, config.beta2, config.moment_floor)
            if trainable
            else None
        )
        best = None
        best_value = np.inf
        stall = 0
        iterations = 0
        for it in range(config.max_iterations):
            weights = _sigmoid(logits) if trainable else template.weights
            path = template.with_anchors(anchors, weights)
            value, anchor_grad, weight_grad = cost_mod.chomp_loss_and_grad(
                scene, path, cost_params, chomp_params, train_weights=trainable
            )
            if not np.isfinite(value):
                if it == 0:
                    raise NumericError("baseline loss is non-finite at initialization")
                break
            iterations = it + 1
            if value < best_value - config.min_improvement:
                stall = 0
            else:
                stall += 1
            if value < best_value:
                best_value = value
                best = path
            if stall >= config.patience:
                break
            anchors = anchors - rate * adam_anchor.step(anchor_grad)
            if trainable:
                logits = logits - rate * adam_logit.step(weight_grad * weights * (1.0 - weights))
            if not np.all(np.isfinite(anchors)):
                break
        breakdown = cost_mod.total_loss(scene, best, cost_params)
        candidates.append((best_value, restart, best, breakdown, iterations))
    candidates.sort(key=lambda c: c[:2])
    _, restart, path, breakdown, iterations = candidates[0]
    return PlanResult(
        path=path,
        breakdown=breakdown,
        iterations=iterations,
        restart_index=restart,
        wall_time_s=time.perf_counter() - started,
        success=breakdown.exact_collision == 0.0,
    )


def refine_collision_only(
    path: SplinePath,
    scene: Scene,
    cost_params: CostParams,
    steps: int,
    learning_rate: float | None = None,
    config: OptimizerConfig | None = None,
) -> PlanResult:
    """Run exactly ``steps`` updates on the smooth collision cost alone.

    The length term is frozen out, so a collision-free path has an exactly
    zero gradient and comes back unchanged.  Returns the final iterate.
    """
    config = config or OptimizerConfig()
    rate = learning_rate if learning_rate is not None else config.resolve_rate(scene)
    anchors = path.anchors.copy()
    adam = AdamState(anchors.shape, config.beta1, config.beta2, config.moment_floor)
    started = time.perf_counter()
    for _ in range(steps):
        current = path.with_anchors(anchors)
        _, anchor_grad, _ = cost_mod.loss_and_grad(
            scene, current, cost_params, include_length=False
        )
        anchors = anchors - rate * adam.step(anchor_grad)
    refined = path.with_anchors(anchors)
    breakdown = cost_mod.total_loss(scene, refined, cost_params)
    return PlanResult(
        path=refined,
        breakdown=breakdown,
        iterations=steps,
        restart_index=0,
        wall_time_s=time.perf_counter() - started,
        success=breakdown.exact_collision == 0.0,
    )
