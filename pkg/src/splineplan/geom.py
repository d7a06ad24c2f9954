"""Obstacle primitives, signed distances, and scene containers.

Sphere and axis-aligned box obstacles in 2-D or 3-D, each with an exact
Euclidean signed distance (negative inside, positive outside) and a
bounding-circle circumference used as the collision penalty weight.
All values are immutable; every function here is pure and thread-safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import autodiff as ad


class GeomError(ValueError):
    """Invalid geometric argument (dimension mismatch, bad shape, ...)."""


class EmptySceneError(GeomError):
    """An obstacle query was made against a scene with no obstacles."""


def _as_point(x, name="point") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.shape[0] not in (2, 3):
        raise GeomError(f"{name} must be a 2-D or 3-D point, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center, "center"))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0.0:
            raise GeomError(f"sphere radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


@dataclass(frozen=True, eq=False)
class Box:
    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center, "center"))
        object.__setattr__(self, "half_extents", _as_point(self.half_extents, "half_extents"))
        if self.half_extents.shape != self.center.shape:
            raise GeomError("half_extents and center must have the same dimension")
        if np.any(self.half_extents <= 0.0):
            raise GeomError(f"box half extents must be positive, got {self.half_extents}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


Obstacle = Union[Sphere, Box]


@dataclass(frozen=True, eq=False)
class Scene:
    """Workspace bounds plus an ordered sequence of obstacles.

    Obstacles may overlap each other and poke out of the bounds; all of
    them must share the scene's dimension.
    """

    obstacles: tuple
    bounds_min: np.ndarray
    bounds_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "bounds_min", _as_point(self.bounds_min, "bounds_min"))
        object.__setattr__(self, "bounds_max", _as_point(self.bounds_max, "bounds_max"))
        if self.bounds_min.shape != self.bounds_max.shape:
            raise GeomError("bounds_min and bounds_max must have the same dimension")
        if np.any(self.bounds_max <= self.bounds_min):
            raise GeomError("scene bounds must have positive extent on every axis")
        for obstacle in self.obstacles:
            if obstacle.dim != self.dim:
                raise GeomError(
                    f"obstacle dimension {obstacle.dim} does not match scene dimension {self.dim}"
                )

    @property
    def dim(self) -> int:
        return self.bounds_min.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.bounds_min + self.bounds_max)

    @property
    def half_extent(self) -> np.ndarray:
        return 0.5 * (self.bounds_max - self.bounds_min)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.bounds_max - self.bounds_min))

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.bounds_min) and np.all(p <= self.bounds_max))


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    scene: Scene
    start: np.ndarray
    goal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "start", _as_point(self.start, "start"))
        object.__setattr__(self, "goal", _as_point(self.goal, "goal"))
        if self.start.shape[0] != self.scene.dim or self.goal.shape[0] != self.scene.dim:
            raise GeomError("start/goal dimension does not match the scene")

    @property
    def straight_distance(self) -> float:
        return float(np.linalg.norm(self.goal - self.start))


# signed distances -------------------------------------------------------------


def sdf_points(obstacle: Obstacle, points: np.ndarray) -> np.ndarray:
    """Signed distances from a batch of points, shape (m, d) -> (m,)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[1] != obstacle.dim:
        raise GeomError(
            f"point dimension {points.shape[1]} does not match obstacle dimension {obstacle.dim}"
        )
    if isinstance(obstacle, Sphere):
        return np.linalg.norm(points - obstacle.center, axis=1) - obstacle.radius
    q = np.abs(points - obstacle.center) - obstacle.half_extents
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(np.max(q, axis=1), 0.0)
    return outside + inside


def sdf(obstacle: Obstacle, x) -> float:
    """Exact Euclidean signed distance: negative inside, zero on the boundary."""
    point = _as_point(x)
    if point.shape[0] != obstacle.dim:
        raise GeomError(
            f"point dimension {point.shape[0]} does not match obstacle dimension {obstacle.dim}"
        )
    return float(sdf_points(obstacle, point[None, :])[0])


def sdf_generic(obstacle: Obstacle, coords: Sequence):
    """Signed distance over generic scalars (floats or tracked scalars).

    Mirrors :func:`sdf` exactly, with the same subgradient selections as the
    vectorized gradient path (earliest index wins ties).
    """
    if len(coords) != obstacle.dim:
        raise GeomError("coordinate count does not match obstacle dimension")
    if isinstance(obstacle, Sphere):
        return ad.hypot([c - ctr for c, ctr in zip(coords, obstacle.center)]) - obstacle.radius
    q = [
        ad.max_select(c - ctr, ctr - c) - h
        for c, ctr, h in zip(coords, obstacle.center, obstacle.half_extents)
    ]
    outside = ad.hypot([ad.max_select(qi, 0.0) for qi in q])
    largest = q[0]
    for qi in q[1:]:
        largest = ad.max_select(largest, qi)
    return outside + ad.min_select(largest, 0.0)


def sdf_gradient_points(obstacle: Obstacle, points: np.ndarray) -> np.ndarray:
    """Spatial gradient of the signed distance at each point, shape (m, d).

    At non-differentiable sets (sphere center, box axis ties) the chosen
    subgradient matches :func:`sdf_generic` so both routes agree.
    """
    points = np.asarray(points, dtype=float)
    if isinstance(obstacle, Sphere):
        delta = points - obstacle.center
        norms = np.linalg.norm(delta, axis=1, keepdims=True)
        grads = np.zeros_like(delta)
        np.divide(delta, norms, out=grads, where=norms > 0.0)
        return grads
    delta = points - obstacle.center
    q = np.abs(delta) - obstacle.half_extents
    sign = np.where(delta >= 0.0, 1.0, -1.0)
    outside_vec = np.maximum(q, 0.0)
    outside_norm = np.linalg.norm(outside_vec, axis=1, keepdims=True)
    grads = np.zeros_like(delta)
    is_outside = outside_norm[:, 0] > 0.0
    if np.any(is_outside):
        g = np.zeros_like(delta[is_outside])
        np.divide(outside_vec[is_outside], outside_norm[is_outside], out=g)
        grads[is_outside] = g * sign[is_outside]
    is_inside = ~is_outside
    if np.any(is_inside):
        face = np.argmax(q[is_inside], axis=1)
        rows = np.nonzero(is_inside)[0]
        grads[rows, face] = sign[rows, face]
    return grads


def sdf_matrix(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Distances of each point against each obstacle, shape (m, k)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if not scene.obstacles:
        return np.empty((points.shape[0], 0))
    return np.stack([sdf_points(o, points) for o in scene.obstacles], axis=1)


def select_objects(scene: Scene, points: np.ndarray):
    """Per-point nearest obstacle index and its signed distance.

    Ties break toward the lowest obstacle index.  Returns (indices, values)
    of shapes (m,) each.
    """
    if not scene.obstacles:
        raise EmptySceneError("cannot select an obstacle in an empty scene")
    matrix = sdf_matrix(scene, points)
    indices = np.argmin(matrix, axis=1)
    values = matrix[np.arange(matrix.shape[0]), indices]
    return indices, values


def select_object(scene: Scene, x) -> tuple[int, float]:
    """Nearest obstacle (by signed distance) at a single point."""
    indices, values = select_objects(scene, _as_point(x)[None, :])
    return int(indices[0]), float(values[0])


def min_sdf_points(scene: Scene, points: np.ndarray) -> np.ndarray:
    """Minimum signed distance over all obstacles per point; +inf if none."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if not scene.obstacles:
        return np.full(points.shape[0], np.inf)
    return sdf_matrix(scene, points).min(axis=1)


def path_collides(scene: Scene, samples: np.ndarray) -> bool:
    """True iff any sample point lies strictly inside an obstacle."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise GeomError("path_collides needs at least two sample points")
    return bool(np.any(min_sdf_points(scene, samples) < 0.0))


def inflate_obstacle(obstacle: Obstacle, margin: float) -> Obstacle:
    """Grow an obstacle by a clearance margin (boxes per axis, conservative)."""
    if margin < 0.0:
        raise GeomError(f"inflation margin must be non-negative, got {margin}")
    if isinstance(obstacle, Sphere):
        return Sphere(center=obstacle.center, radius=obstacle.radius + margin)
    return Box(center=obstacle.center, half_extents=obstacle.half_extents + margin)


def inflate_scene(scene: Scene, margin: float) -> Scene:
    if margin == 0.0:
        return scene
    return Scene(
        obstacles=tuple(inflate_obstacle(o, margin) for o in scene.obstacles),
        bounds_min=scene.bounds_min,
        bounds_max=scene.bounds_max,
    )


# penalty weights ---------------------------------------------------------------


def bounding_radius(obstacle: Obstacle) -> float:
    """Radius of the bounding sphere centered at the obstacle's own center."""
    if isinstance(obstacle, Sphere):
        return obstacle.radius
    return float(np.linalg.norm(obstacle.half_extents))


def bounding_circumference(obstacle: Obstacle) -> float:
    """Collision penalty weight: bounding-sphere circumference, 2*pi*radius."""
    return 2.0 * np.pi * bounding_radius(obstacle)


def circumference_vector(scene: Scene) -> np.ndarray:
    return np.array([bounding_circumference(o) for o in scene.obstacles])


# JSON wire format --------------------------------------------------------------


def obstacle_to_json(obstacle: Obstacle) -> dict:
    if isinstance(obstacle, Sphere):
        return {"kind": "sphere", "center": obstacle.center.tolist(), "radius": obstacle.radius}
    return {
        "kind": "box",
        "center": obstacle.center.tolist(),
        "half_extents": obstacle.half_extents.tolist(),
    }


def obstacle_from_json(data: dict) -> Obstacle:
    kind = data.get("kind")
    if kind == "sphere":
        return Sphere(center=data["center"], radius=data["radius"])
    if kind == "box":
        return Box(center=data["center"], half_extents=data["half_extents"])
    raise GeomError(f"unknown obstacle kind {kind!r}")


def scene_to_json(scene: Scene) -> dict:
    return {
        "dim": scene.dim,
        "bounds": {"min": scene.bounds_min.tolist(), "max": scene.bounds_max.tolist()},
        "obstacles": [obstacle_to_json(o) for o in scene.obstacles],
    }


def scene_from_json(data: dict) -> Scene:
    bounds = data["bounds"]
    scene = Scene(
        obstacles=tuple(obstacle_from_json(o) for o in data.get("obstacles", [])),
        bounds_min=bounds["min"],
        bounds_max=bounds["max"],
    )
    if scene.dim != data.get("dim", scene.dim):
        raise GeomError("scene dim field does not match bounds dimension")
    return scene


def problem_to_json(problem: PlanningProblem) -> dict:
    return {
        "scene": scene_to_json(problem.scene),
        "start": problem.start.tolist(),
        "goal": problem.goal.tolist(),
    }


def problem_from_json(data: dict) -> PlanningProblem:
    return PlanningProblem(
        scene=scene_from_json(data["scene"]), start=data["start"], goal=data["goal"]
    )


def load_scene(path: str) -> Scene:
    with open(path) as fh:
        return scene_from_json(json.load(fh))


def dump_scene(scene: Scene, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_json(scene), fh, indent=2)
