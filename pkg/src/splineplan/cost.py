"""Path cost: polyline length plus a circumference-weighted collision penalty.

The exact collision cost charges each crossed obstacle its full bounding
circumference, which makes any detour around an obstacle cheaper than
cutting through it, with no tunable trade-off weight.  Because the exact
cost is piecewise constant in the path parameters, optimization uses a
smooth upper bound: each colliding sample pays its per-sample share of the
obstacle circumference times a sigmoid step in the signed distance, whose
gradient pushes the sample outward.

A clearance-based baseline cost (the CHOMP collision term, with its weight
and margin hyperparameters) is provided for comparison benchmarks.

Two evaluation routes exist and are tested against each other: fast
vectorized numpy (used by the optimizer and the trainer, including analytic
gradients) and a scalar route generic over tracked autodiff values (used
for gradient verification).  Branch decisions - which samples collide,
which obstacle each sample selects, per-obstacle sample counts - are always
taken on plain values and treated as constants under differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import geom
from .geom import Scene
from .spline import (
    SampleSet,
    SplinePath,
    WEIGHT_FLOOR,
    basis_matrix,
    open_uniform_knots,
    parameter_domain_max,
    sample_parameters,
    sample_path,
)

SIGMOID_CLAMP = 50.0  # |x - safe_distance| beyond this pins the step to 0 or 2


class CostError(ValueError):
    """Invalid cost-evaluation argument or violated call contract."""


@dataclass(frozen=True)
class CostParams:
    """Sampling step along the parameter domain and the safe distance."""

    step: float
    safe_distance: float = 0.0

    def __post_init__(self):
        if self.step <= 0.0:
            raise CostError(f"sampling step must be positive, got {self.step}")
        if self.safe_distance < 0.0:
            raise CostError(f"safe distance must be non-negative, got {self.safe_distance}")


@dataclass(frozen=True)
class ChompParams:
    """Collision weight and clearance margin of the baseline cost."""

    collision_weight: float
    clearance: float

    def __post_init__(self):
        if not (np.isfinite(self.collision_weight) and self.collision_weight > 0.0):
            raise CostError(f"collision weight must be positive, got {self.collision_weight}")
        if not (np.isfinite(self.clearance) and self.clearance > 0.0):
            raise CostError(f"clearance must be positive, got {self.clearance}")


@dataclass(frozen=True)
class CostBreakdown:
    length: float
    exact_collision: float
    smooth_collision: float
    total_smooth: float
    collides: bool

    def to_json(self) -> dict:
        return {
            "length": self.length,
            "exact_collision": self.exact_collision,
            "smooth_collision": self.smooth_collision,
            "total_smooth": self.total_smooth,
            "collides": self.collides,
        }


# cached sampling bases ---------------------------------------------------------

_BASIS_CACHE: dict = {}


def sampling_basis(n_anchors: int, degree: int, step: float):
    """(parameters, basis matrix) for the uniform ladder, cached per shape."""
    key = (n_anchors, degree, round(float(step), 12))
    hit = _BASIS_CACHE.get(key)
    if hit is None:
        us = sample_parameters(n_anchors, degree, step)
        knots = open_uniform_knots(
            n_anchors + 2, degree, parameter_domain_max(n_anchors, degree)
        )
        hit = (us, basis_matrix(knots, degree, us))
        _BASIS_CACHE[key] = hit
    return hit


def _path_points(path: SplinePath, step: float):
    """Sampled points plus the pieces the gradient needs."""
    us, basis = sampling_basis(path.n_anchors, path.degree, step)
    control_weights = path.control_weights
    weighted = basis * control_weights[None, :]
    denom = weighted.sum(axis=1)
    rational = weighted / denom[:, None]
    control = path.control_points
    points = rational @ control
    return us, basis, denom, rational, control, points


# collision profile -------------------------------------------------------------


@dataclass(frozen=True)
class CollisionProfile:
    """Frozen per-sample branch decisions for one sampled path."""

    min_sdf: np.ndarray      # (S,) minimum signed distance per sample
    selected: np.ndarray     # (S,) nearest obstacle index, -1 if no obstacles
    colliding: np.ndarray    # (S,) bool
    group_sizes: np.ndarray  # (K,) colliding samples per selected obstacle
    point_costs: np.ndarray  # (S,) circumference share, 0 for free samples


def collision_profile(scene: Scene, points: np.ndarray) -> CollisionProfile:
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not scene.obstacles:
        zero = np.zeros(n)
        return CollisionProfile(
            min_sdf=np.full(n, np.inf),
            selected=np.full(n, -1, dtype=int),
            colliding=np.zeros(n, dtype=bool),
            group_sizes=np.zeros(0, dtype=int),
            point_costs=zero,
        )
    matrix = geom.sdf_matrix(scene, points)
    selected = np.argmin(matrix, axis=1)
    min_sdf = matrix[np.arange(n), selected]
    colliding = min_sdf < 0.0
    group_sizes = np.bincount(selected[colliding], minlength=len(scene.obstacles))
    point_costs = np.zeros(n)
    if colliding.any():
        circ = geom.circumference_vector(scene)
        idx = selected[colliding]
        point_costs[colliding] = circ[idx] / group_sizes[idx]
    return CollisionProfile(min_sdf, selected, colliding, group_sizes, point_costs)


# cost pieces -------------------------------------------------------------------


def path_length(samples) -> float:
    """Sum of consecutive sample distances (polyline length)."""
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    if points.shape[0] < 2:
        raise CostError("path length needs at least two samples")
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def exact_collision_cost(scene: Scene, samples) -> float:
    """Full bounding circumference of every obstacle the samples enter.

    An obstacle counts as crossed when some colliding sample selects it as
    its nearest obstacle, which keeps the indicator sum identical to the
    sum of per-sample circumference shares (the two are computed from the
    same grouping).
    """
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    profile = collision_profile(scene, points)
    if not profile.colliding.any():
        return 0.0
    circ = geom.circumference_vector(scene)
    return float(circ[profile.group_sizes > 0].sum())


def shared_collision_count(scene: Scene, samples, sample_index: int) -> int:
    """How many colliding samples select the same obstacle as this one.

    At least 1: the queried sample counts itself.  Calling this on a
    non-colliding sample is a contract violation.
    """
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    profile = collision_profile(scene, points)
    if not profile.colliding[sample_index]:
        raise CostError(f"sample {sample_index} is not colliding")
    return int(profile.group_sizes[profile.selected[sample_index]])


def point_cost(scene: Scene, samples, sample_index: int) -> float:
    """This sample's share of its obstacle's circumference; 0 when free."""
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    profile = collision_profile(scene, points)
    return float(profile.point_costs[sample_index])


def smooth_step(x, safe_distance: float):
    """Sigmoid step ``2 / (1 + e^(x - safe_distance))``.

    Equals 1 at the safe distance, stays at or above 1 below it, and decays
    to 0 far outside.  Saturates to exactly 0 or 2 beyond the overflow
    clamp.  Accepts plain floats or tracked scalars.
    """
    z = ad.value_of(x) - safe_distance
    if z > SIGMOID_CLAMP:
        return 0.0
    if z < -SIGMOID_CLAMP:
        return 2.0
    return 2.0 / (1.0 + ad.exp(x - safe_distance))


def _smooth_step_np(z: np.ndarray):
    """Vectorized step and derivative in the shifted coordinate z = x - safe."""
    zc = np.clip(z, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    e = np.exp(zc)
    h = 2.0 / (1.0 + e)
    dh = -2.0 * e / (1.0 + e) ** 2
    h = np.where(z > SIGMOID_CLAMP, 0.0, h)
    dh = np.where(z > SIGMOID_CLAMP, 0.0, dh)
    return h, dh


def smooth_collision_cost(scene: Scene, samples, params: CostParams) -> float:
    """Differentiable upper bound: circumference shares scaled by the step.

    Zero exactly when no sample collides; never below the exact cost since
    the step factor is at least 1 for colliding samples.
    """
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    profile = collision_profile(scene, points)
    if not profile.colliding.any():
        return 0.0
    z = profile.min_sdf[profile.colliding] - params.safe_distance
    h, _ = _smooth_step_np(z)
    return float((profile.point_costs[profile.colliding] * h).sum())


def total_loss(scene: Scene, path: SplinePath, params: CostParams) -> CostBreakdown:
    """Length plus the smooth collision bound, with the exact cost alongside."""
    samples = sample_path(path, params.step)
    return breakdown_for_samples(scene, samples, params)


def breakdown_for_samples(scene: Scene, samples, params: CostParams) -> CostBreakdown:
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    profile = collision_profile(scene, points)
    length = path_length(points) if points.shape[0] >= 2 else 0.0
    if profile.colliding.any():
        circ = geom.circumference_vector(scene)
        exact = float(circ[profile.group_sizes > 0].sum())
        h, _ = _smooth_step_np(profile.min_sdf[profile.colliding] - params.safe_distance)
        smooth = float((profile.point_costs[profile.colliding] * h).sum())
    else:
        exact = 0.0
        smooth = 0.0
    return CostBreakdown(
        length=length,
        exact_collision=exact,
        smooth_collision=smooth,
        total_smooth=length + smooth,
        collides=bool(profile.colliding.any()),
    )


# baseline cost -----------------------------------------------------------------


def chomp_point_cost(sdf_value, params: ChompParams):
    """Clearance penalty: linear inside, quadratic within the margin, else 0.

    The boundary value (distance exactly zero) takes the quadratic branch,
    which meets the linear branch continuously at half the margin.
    """
    m = ad.value_of(sdf_value)
    eps = params.clearance
    if m < 0.0:
        return -sdf_value + 0.5 * eps
    if m <= eps:
        return ad.pow2(sdf_value - eps) / (2.0 * eps)
    return 0.0


def _chomp_np(min_sdf: np.ndarray, params: ChompParams):
    """Vectorized baseline penalty and its derivative in the distance."""
    eps = params.clearance
    inside = min_sdf < 0.0
    margin = (~inside) & (min_sdf <= eps)
    value = np.where(inside, -min_sdf + 0.5 * eps, 0.0)
    value = np.where(margin, (min_sdf - eps) ** 2 / (2.0 * eps), value)
    deriv = np.where(inside, -1.0, 0.0)
    deriv = np.where(margin, (min_sdf - eps) / eps, deriv)
    return value, deriv


def chomp_total_loss(
    scene: Scene, path: SplinePath, cost_params: CostParams, chomp_params: ChompParams
) -> float:
    """Length plus the weighted sum of per-sample clearance penalties."""
    samples = sample_path(path, cost_params.step)
    min_sdf = geom.min_sdf_points(scene, samples.points)
    penalty, _ = _chomp_np(np.where(np.isfinite(min_sdf), min_sdf, chomp_params.clearance + 1.0), chomp_params)
    return path_length(samples) + chomp_params.collision_weight * float(penalty.sum())


# analytic gradients ------------------------------------------------------------


def _length_and_point_grad(points: np.ndarray):
    diffs = np.diff(points, axis=0)
    norms = np.linalg.norm(diffs, axis=1)
    length = float(norms.sum())
    units = np.zeros_like(diffs)
    np.divide(diffs, norms[:, None], out=units, where=norms[:, None] > 0.0)
    grad = np.zeros_like(points)
    grad[1:] += units
    grad[:-1] -= units
    return length, grad


def _collision_point_grad(scene, points, profile, params: CostParams):
    """Smooth collision value and its gradient in the sample points."""
    grad = np.zeros_like(points)
    if not profile.colliding.any():
        return 0.0, grad
    h, dh = _smooth_step_np(profile.min_sdf - params.safe_distance)
    value = float((profile.point_costs[profile.colliding] * h[profile.colliding]).sum())
    scale = profile.point_costs * dh
    for k, obstacle in enumerate(scene.obstacles):
        rows = profile.colliding & (profile.selected == k)
        if not rows.any():
            continue
        grad[rows] = scale[rows, None] * geom.sdf_gradient_points(obstacle, points[rows])
    return value, grad


def _weight_gradient(path, basis, denom, points, point_grad):
    """Chain the point gradient back to the free anchor weights."""
    scaled = basis / denom[:, None]
    inner = point_grad @ path.control_points.T - (point_grad * points).sum(axis=1, keepdims=True)
    grad_full = (scaled * inner).sum(axis=0)
    grad = grad_full[1:-1]
    clamped = (path.weights <= WEIGHT_FLOOR) | (path.weights > 1.0)
    grad[clamped] = 0.0
    return grad


def loss_and_grad(
    scene: Scene,
    path: SplinePath,
    params: CostParams,
    *,
    train_weights: bool = False,
    include_length: bool = True,
):
    """Breakdown plus gradients of the smooth objective.

    Returns ``(breakdown, anchor_grad, weight_grad)`` where ``anchor_grad``
    has shape (n, d) and ``weight_grad`` is None unless requested.  With
    ``include_length`` off, the objective is the smooth collision cost
    alone (the length term is frozen out, as in test-time refinement).
    """
    us, basis, denom, rational, control, points = _path_points(path, params.step)
    profile = collision_profile(scene, points)
    length, length_grad = _length_and_point_grad(points)
    smooth, collision_grad = _collision_point_grad(scene, points, profile, params)
    point_grad = collision_grad + (length_grad if include_length else 0.0)
    control_grad = rational.T @ point_grad
    anchor_grad = control_grad[1:-1]
    weight_grad = _weight_gradient(path, basis, denom, points, point_grad) if train_weights else None
    if profile.colliding.any():
        circ = geom.circumference_vector(scene)
        exact = float(circ[profile.group_sizes > 0].sum())
    else:
        exact = 0.0
    breakdown = CostBreakdown(
        length=length,
        exact_collision=exact,
        smooth_collision=smooth,
        total_smooth=length + smooth,
        collides=bool(profile.colliding.any()),
    )
    return breakdown, anchor_grad, weight_grad


def length_and_grad(path: SplinePath, params: CostParams):
    """Polyline length and its anchor gradient alone (no collision terms)."""
    us, basis, denom, rational, control, points = _path_points(path, params.step)
    length, length_grad = _length_and_point_grad(points)
    return length, (rational.T @ length_grad)[1:-1]


def chomp_loss_and_grad(
    scene: Scene,
    path: SplinePath,
    params: CostParams,
    chomp: ChompParams,
    *,
    train_weights: bool = False,
):
    """Baseline objective value plus gradients, same conventions as above."""
    us, basis, denom, rational, control, points = _path_points(path, params.step)
    length, length_grad = _length_and_point_grad(points)
    if scene.obstacles:
        matrix = geom.sdf_matrix(scene, points)
        selected = np.argmin(matrix, axis=1)
        min_sdf = matrix[np.arange(points.shape[0]), selected]
        penalty, deriv = _chomp_np(min_sdf, chomp)
        point_grad = length_grad.copy()
        for k, obstacle in enumerate(scene.obstacles):
            rows = (selected == k) & (deriv != 0.0)
            if not rows.any():
                continue
            point_grad[rows] += (
                chomp.collision_weight
                * deriv[rows, None]
                * geom.sdf_gradient_points(obstacle, points[rows])
            )
        value = length + chomp.collision_weight * float(penalty.sum())
    else:
        point_grad = length_grad
        value = length
    control_grad = rational.T @ point_grad
    anchor_grad = control_grad[1:-1]
    weight_grad = _weight_gradient(path, basis, denom, points, point_grad) if train_weights else None
    return value, anchor_grad, weight_grad


# generic scalar route ----------------------------------------------------------


def _generic_points(path_plain, basis, xs, n, dim, train_weights):
    """Sampled points as generic scalars from the flat parameter vector."""
    anchors = [[xs[i * dim + a] for a in range(dim)] for i in range(n)]
    start = path_plain.start
    goal = path_plain.goal
    controls = [list(start)] + anchors + [list(goal)]
    if train_weights:
        raw = xs[n * dim : n * dim + n]
        weights = [ad.min_select(ad.max_select(w, WEIGHT_FLOOR), 1.0) for w in raw]
        full_weights = [1.0] + weights + [1.0]
        points = []
        for row in basis:
            active = [i for i in range(len(full_weights)) if row[i] != 0.0]
            den = 0.0
            for i in active:
                den = den + row[i] * full_weights[i]
            coords = []
            for a in range(dim):
                num = 0.0
                for i in active:
                    num = num + (row[i] * full_weights[i]) * controls[i][a]
                coords.append(num / den)
            points.append(coords)
        return points
    control_weights = path_plain.control_weights
    weighted = basis * control_weights[None, :]
    rational = weighted / weighted.sum(axis=1, keepdims=True)
    points = []
    for row in rational:
        active = [i for i in range(rational.shape[1]) if row[i] != 0.0]
        coords = []
        for a in range(dim):
            num = 0.0
            for i in active:
                num = num + row[i] * controls[i][a]
            coords.append(num)
        points.append(coords)
    return points


def _plain_path_from_vector(template: SplinePath, xs, train_weights):
    n, dim = template.anchors.shape
    plain = np.array([ad.value_of(v) for v in xs], dtype=float)
    anchors = plain[: n * dim].reshape(n, dim)
    if train_weights:
        weights = np.clip(plain[n * dim : n * dim + n], 0.0, 1.0)
        return template.with_anchors(anchors, weights)
    return template.with_anchors(anchors)


def generic_smooth_loss(
    scene: Scene,
    template: SplinePath,
    params: CostParams,
    xs,
    *,
    train_weights: bool = False,
    include_length: bool = True,
):
    """Smooth objective over a flat generic vector of spline parameters.

    Layout: row-major anchor coordinates, then the anchor weights when
    ``train_weights`` is set.  Branch decisions are frozen from the plain
    values, so the returned expression differentiates exactly like the
    vectorized gradient path.
    """
    n, dim = template.anchors.shape
    plain_path = _plain_path_from_vector(template, xs, train_weights)
    us, basis = sampling_basis(n, template.degree, params.step)
    plain_samples = sample_path(plain_path, params.step)
    profile = collision_profile(scene, plain_samples.points)
    points = _generic_points(plain_path, basis, list(xs), n, dim, train_weights)
    total = 0.0
    if include_length:
        plain_pts = plain_samples.points
        for j in range(len(points) - 1):
            if np.array_equal(plain_pts[j], plain_pts[j + 1]):
                continue
            total = total + ad.hypot(
                [points[j + 1][a] - points[j][a] for a in range(dim)]
            )
    for j in np.nonzero(profile.colliding)[0]:
        obstacle = scene.obstacles[profile.selected[j]]
        distance = geom.sdf_generic(obstacle, points[j])
        total = total + profile.point_costs[j] * smooth_step(distance, params.safe_distance)
    return total


def generic_chomp_loss(
    scene: Scene,
    template: SplinePath,
    params: CostParams,
    chomp: ChompParams,
    xs,
    *,
    train_weights: bool = False,
):
    """Baseline objective over a flat generic vector, branch-frozen like above."""
    n, dim = template.anchors.shape
    plain_path = _plain_path_from_vector(template, xs, train_weights)
    us, basis = sampling_basis(n, template.degree, params.step)
    plain_samples = sample_path(plain_path, params.step)
    points = _generic_points(plain_path, basis, list(xs), n, dim, train_weights)
    total = 0.0
    plain_pts = plain_samples.points
    for j in range(len(points) - 1):
        if np.array_equal(plain_pts[j], plain_pts[j + 1]):
            continue
        total = total + ad.hypot([points[j + 1][a] - points[j][a] for a in range(dim)])
    if scene.obstacles:
        indices, values = geom.select_objects(scene, plain_samples.points)
        for j in range(len(points)):
            if values[j] > chomp.clearance:
                continue
            distance = geom.sdf_generic(scene.obstacles[indices[j]], points[j])
            total = total + chomp.collision_weight * chomp_point_cost(distance, chomp)
    return total


# diagnostics -------------------------------------------------------------------


def branch_margin(scene: Scene, points: np.ndarray) -> float:
    """Distance from the nearest gradient branch boundary over all samples.

    Checks the collision indicator (distance to the zero level set), the
    nearest-obstacle selection gap, and for samples whose nearest obstacle
    is a box, the interior face-selection gap and axis-center crossings.
    Finite-difference checks should reject configurations where this falls
    below the probe step.
    """
    points = np.asarray(points, dtype=float)
    if not scene.obstacles:
        return np.inf
    matrix = geom.sdf_matrix(scene, points)
    ordered = np.sort(matrix, axis=1)
    margin = float(np.abs(ordered[:, 0]).min())
    if matrix.shape[1] > 1:
        margin = min(margin, float((ordered[:, 1] - ordered[:, 0]).min()))
    selected = np.argmin(matrix, axis=1)
    for k, obstacle in enumerate(scene.obstacles):
        if not isinstance(obstacle, geom.Box):
            continue
        rows = selected == k
        if not rows.any():
            continue
        delta = points[rows] - obstacle.center
        q = np.abs(delta) - obstacle.half_extents
        inside = q.max(axis=1) < 0.0
        if inside.any():
            qi = q[inside]
            top = np.sort(qi, axis=1)
            if qi.shape[1] > 1:
                margin = min(margin, float((top[:, -1] - top[:, -2]).min()))
            face = np.argmax(qi, axis=1)
            margin = min(
                margin, float(np.abs(delta[inside, :][np.arange(face.size), face]).min())
            )
    return margin


def max_sample_spacing(samples) -> float:
    points = samples.points if isinstance(samples, SampleSet) else np.asarray(samples, float)
    if points.shape[0] < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).max())


def check_sampling_resolution(scene: Scene, samples) -> bool:
    """True when consecutive samples are closer than the smallest obstacle."""
    if not scene.obstacles:
        return True
    smallest = min(geom.bounding_radius(o) for o in scene.obstacles)
    return max_sample_spacing(samples) < smallest
