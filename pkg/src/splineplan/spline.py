"""Rational B-spline paths: open-uniform knots, basis evaluation, sampling.

A path is a rational B-spline whose full control sequence is
``[start, anchor_1 .. anchor_n, goal]`` with unit weights pinned on the
endpoints, so the curve interpolates start and goal exactly.  The free
anchors (and optionally their weights) are the optimization variables.

The parameter domain is ``[0, n - degree]`` whenever ``n > degree``; for
the few-anchor configurations used by the brute-force oracle (down to a
single anchor) it falls back to one unit per span, ``[0, n + 2 - degree]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

WEIGHT_FLOOR = 1e-3  # rational bases degenerate at weight 0; clamp away from it


class SplineError(ValueError):
    """Invalid spline construction or evaluation argument."""


class DomainError(SplineError):
    """Evaluation parameter outside the knot domain."""


def parameter_domain_max(n_anchors: int, degree: int) -> float:
    if n_anchors > degree:
        return float(n_anchors - degree)
    return float(n_anchors + 2 - degree)


def open_uniform_knots(count: int, degree: int, domain_max: float) -> np.ndarray:
    """Clamped knot vector for ``count`` control points over ``[0, domain_max]``.

    ``degree + 1`` repeated knots at each end force endpoint interpolation;
    the ``count - degree - 1`` interior knots are uniformly spaced.
    """
    if count <= degree:
        raise SplineError(f"need more than degree={degree} control points, got {count}")
    if domain_max <= 0.0:
        raise SplineError(f"domain_max must be positive, got {domain_max}")
    interior = np.linspace(0.0, domain_max, count - degree + 1)[1:-1]
    return np.concatenate(
        [np.zeros(degree + 1), interior, np.full(degree + 1, float(domain_max))]
    )


@dataclass(frozen=True, eq=False)
class SplinePath:
    """Spline path pinned at ``start`` and ``goal`` with ``n`` free anchors."""

    degree: int
    start: np.ndarray
    goal: np.ndarray
    anchors: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,), in [0, 1]

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        anchors = np.asarray(self.anchors, dtype=float)
        if anchors.ndim != 2:
            raise SplineError(f"anchors must have shape (n, d), got {anchors.shape}")
        object.__setattr__(self, "anchors", anchors)
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (anchors.shape[0],):
            raise SplineError("need exactly one weight per anchor")
        if np.any(weights < 0.0) or np.any(weights > 1.0):
            raise SplineError("anchor weights must lie in [0, 1]")
        object.__setattr__(self, "weights", weights)
        if self.degree < 1:
            raise SplineError(f"degree must be at least 1, got {self.degree}")
        if self.start.shape != self.goal.shape or self.start.shape[0] != anchors.shape[1]:
            raise SplineError("start, goal, and anchors must share one dimension")
        if anchors.shape[0] + 2 <= self.degree:
            raise SplineError(
                f"{anchors.shape[0]} anchors cannot support degree {self.degree}"
            )

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    @property
    def domain_max(self) -> float:
        return parameter_domain_max(self.n_anchors, self.degree)

    @property
    def control_points(self) -> np.ndarray:
        """Full control sequence (n + 2, d) including the pinned endpoints."""
        return np.vstack([self.start[None, :], self.anchors, self.goal[None, :]])

    @property
    def control_weights(self) -> np.ndarray:
        """Weights with the endpoint units, clamped away from zero."""
        clamped = np.clip(self.weights, WEIGHT_FLOOR, 1.0)
        return np.concatenate([[1.0], clamped, [1.0]])

    @property
    def knots(self) -> np.ndarray:
        return open_uniform_knots(self.n_anchors + 2, self.degree, self.domain_max)

    def with_anchors(self, anchors, weights=None) -> "SplinePath":
        return SplinePath(
            degree=self.degree,
            start=self.start,
            goal=self.goal,
            anchors=anchors,
            weights=self.weights if weights is None else weights,
        )


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Path evaluated on the uniform parameter ladder ``{0, s, 2s, ...}``."""

    step: float
    parameters: np.ndarray
    points: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]


def basis_matrix(knots: np.ndarray, degree: int, us: np.ndarray) -> np.ndarray:
    """Cox-de Boor basis values, shape (len(us), count).

    Zero-width spans contribute nothing (0/0 terms are treated as 0); the
    right end of the domain is assigned to the last non-empty span so the
    final control point is reproduced exactly.
    """
    knots = np.asarray(knots, dtype=float)
    us = np.atleast_1d(np.asarray(us, dtype=float))
    count = knots.shape[0] - degree - 1
    spans = knots.shape[0] - 1
    values = np.zeros((us.shape[0], spans))
    for i in range(spans):
        if knots[i] < knots[i + 1]:
            values[:, i] = (us >= knots[i]) & (us < knots[i + 1])
    domain_max = knots[count]
    at_end = us == domain_max
    if np.any(at_end):
        last = max(i for i in range(count) if knots[i] < knots[i + 1])
        values[at_end, :] = 0.0
        values[at_end, last] = 1.0
    for d in range(1, degree + 1):
        prev = values
        values = np.zeros((us.shape[0], spans - d))
        for i in range(spans - d):
            left_den = knots[i + d] - knots[i]
            if left_den > 0.0:
                values[:, i] += (us - knots[i]) / left_den * prev[:, i]
            right_den = knots[i + d + 1] - knots[i + 1]
            if right_den > 0.0:
                values[:, i] += (knots[i + d + 1] - us) / right_den * prev[:, i + 1]
    return values[:, :count]


def rational_basis(path: SplinePath, us: np.ndarray) -> np.ndarray:
    """Weight-normalized basis rows; each row sums to one."""
    basis = basis_matrix(path.knots, path.degree, us)
    weighted = basis * path.control_weights[None, :]
    return weighted / weighted.sum(axis=1, keepdims=True)


def nurbs_eval(path: SplinePath, u: float) -> np.ndarray:
    """Point on the path at parameter ``u`` in ``[0, domain_max]``."""
    u = float(u)
    if u < -1e-12 or u > path.domain_max + 1e-12:
        raise DomainError(f"parameter {u} outside [0, {path.domain_max}]")
    u = min(max(u, 0.0), path.domain_max)
    row = rational_basis(path, np.array([u]))[0]
    return row @ path.control_points


def sample_parameters(n_anchors: int, degree: int, step: float) -> np.ndarray:
    """The ladder ``{0, s, 2s, ...}`` clipped to the domain, end appended.

    The domain end is always present: snapped onto the last rung when the
    step divides the domain, appended otherwise.
    """
    if step <= 0.0:
        raise SplineError(f"sampling step must be positive, got {step}")
    domain_max = parameter_domain_max(n_anchors, degree)
    rungs = int(np.floor(domain_max / step + 1e-9))
    us = np.arange(rungs + 1) * step
    if abs(us[-1] - domain_max) <= 1e-9:
        us[-1] = domain_max
    else:
        us = np.append(us, domain_max)
    return us


def sample_path(path: SplinePath, step: float) -> SampleSet:
    us = sample_parameters(path.n_anchors, path.degree, step)
    points = rational_basis(path, us) @ path.control_points
    return SampleSet(step=float(step), parameters=us, points=points)


def straight_line_spline(start, goal, n_anchors: int, degree: int) -> SplinePath:
    """Unit-weight path whose anchors sit uniformly strictly between the endpoints."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    fractions = np.arange(1, n_anchors + 1) / (n_anchors + 1)
    anchors = start[None, :] + fractions[:, None] * (goal - start)[None, :]
    return SplinePath(
        degree=degree, start=start, goal=goal, anchors=anchors, weights=np.ones(n_anchors)
    )


# JSON wire format --------------------------------------------------------------


def path_to_json(path: SplinePath) -> dict:
    return {
        "degree": path.degree,
        "start": path.start.tolist(),
        "goal": path.goal.tolist(),
        "anchors": path.anchors.tolist(),
        "weights": path.weights.tolist(),
    }


def path_from_json(data: dict) -> SplinePath:
    return SplinePath(
        degree=data["degree"],
        start=data["start"],
        goal=data["goal"],
        anchors=data["anchors"],
        weights=data["weights"],
    )


def load_path(path: str) -> SplinePath:
    with open(path) as fh:
        return path_from_json(json.load(fh))


def dump_path(spline_path: SplinePath, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(path_to_json(spline_path), fh, indent=2)
