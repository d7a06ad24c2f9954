"""Brute-force ground truth for one-anchor 2-D instances.

Exhaustive grid search over the single free anchor gives reference optima
and full cost landscapes (for heatmap rendering), plus a randomized
verifier for the three conditions that make the collision penalty a valid
shortest-path cost: optimal paths minimize it, it vanishes exactly on
collision-free paths, and it dominates any length saved by cutting through
an obstacle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import geom
from .cost import ChompParams, CostParams, _chomp_np, _smooth_step_np, sampling_basis
from .geom import PlanningProblem
from .spline import straight_line_spline

_CHUNK = 4096

OBJECTIVES = ("smooth", "exact", "chomp")


class OracleError(ValueError):
    """Instance outside what brute force supports (one anchor, 2-D only)."""


@dataclass(frozen=True)
class GridSpec:
    """Per-axis ranges and node count for the anchor search grid."""

    x_range: tuple
    y_range: tuple
    resolution: int

    def __post_init__(self):
        if self.resolution < 2:
            raise OracleError("grid resolution must be at least 2")

    @classmethod
    def from_scene(cls, scene: geom.Scene, resolution: int) -> "GridSpec":
        return cls(
            x_range=(float(scene.bounds_min[0]), float(scene.bounds_max[0])),
            y_range=(float(scene.bounds_min[1]), float(scene.bounds_max[1])),
            resolution=resolution,
        )

    def axes(self):
        xs = np.linspace(self.x_range[0], self.x_range[1], self.resolution)
        ys = np.linspace(self.y_range[0], self.y_range[1], self.resolution)
        return xs, ys

    def nodes(self) -> np.ndarray:
        """All grid nodes in row-major (x-index outer) order, shape (r*r, 2)."""
        xs, ys = self.axes()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])

    @property
    def spacing(self) -> tuple:
        dx = (self.x_range[1] - self.x_range[0]) / (self.resolution - 1)
        dy = (self.y_range[1] - self.y_range[0]) / (self.resolution - 1)
        return dx, dy

    @property
    def cell_diagonal(self) -> float:
        dx, dy = self.spacing
        return float(np.hypot(dx, dy))


def anchor_batch_metrics(
    problem: PlanningProblem,
    cost_params: CostParams,
    anchors: np.ndarray,
    *,
    degree: int = 2,
    chomp_params: ChompParams | None = None,
) -> dict:
    """Cost pieces of the one-anchor path family at many anchor positions.

    Exploits that with unit weights the sampled points are affine in the
    anchor, so whole batches evaluate as dense array work.  Returns arrays
    keyed by ``length``, ``exact``, ``smooth``, ``collides`` (and ``chomp``
    when baseline parameters are given), each of shape (M,).
    """
    scene = problem.scene
    if scene.dim != 2:
        raise OracleError("brute force supports 2-D scenes only")
    anchors = np.asarray(anchors, dtype=float)
    template = straight_line_spline(problem.start, problem.goal, 1, degree)
    us, basis = sampling_basis(1, degree, cost_params.step)
    base = basis[:, 0, None] * template.start[None, :] + basis[:, 2, None] * template.goal[None, :]
    col = basis[:, 1]
    circ = geom.circumference_vector(scene)
    n_obstacles = len(scene.obstacles)

    m_total = anchors.shape[0]
    out = {
        "length": np.zeros(m_total),
        "exact": np.zeros(m_total),
        "smooth": np.zeros(m_total),
        "collides": np.zeros(m_total, dtype=bool),
        "min_sdf": np.full(m_total, np.inf),
    }
    if chomp_params is not None:
        out["chomp"] = np.zeros(m_total)

    for lo in range(0, m_total, _CHUNK):
        hi = min(lo + _CHUNK, m_total)
        block = anchors[lo:hi]
        points = base[None, :, :] + col[None, :, None] * block[:, None, :]
        m, s, _ = points.shape
        flat = points.reshape(m * s, 2)
        segs = np.linalg.norm(np.diff(points, axis=1), axis=2)
        out["length"][lo:hi] = segs.sum(axis=1)
        if n_obstacles == 0:
            continue
        sd = np.stack(
            [geom.sdf_points(o, flat).reshape(m, s) for o in scene.obstacles], axis=2
        )
        selected = np.argmin(sd, axis=2)
        mins = np.take_along_axis(sd, selected[:, :, None], axis=2)[:, :, 0]
        colliding = mins < 0.0
        out["collides"][lo:hi] = colliding.any(axis=1)
        out["min_sdf"][lo:hi] = mins.min(axis=1)
        counts = np.zeros((m, n_obstacles))
        for k in range(n_obstacles):
            counts[:, k] = (colliding & (selected == k)).sum(axis=1)
        out["exact"][lo:hi] = (circ[None, :] * (counts > 0)).sum(axis=1)
        shares = np.zeros((m, s))
        rows = np.arange(m)[:, None]
        group = counts[rows, selected]
        np.divide(
            np.broadcast_to(circ[selected], (m, s)), group, out=shares, where=colliding
        )
        h, _ = _smooth_step_np(mins - cost_params.safe_distance)
        out["smooth"][lo:hi] = (shares * h * colliding).sum(axis=1)
        if chomp_params is not None:
            penalty, _ = _chomp_np(mins, chomp_params)
            out["chomp"][lo:hi] = chomp_params.collision_weight * penalty.sum(axis=1)
    return out


def _objective_values(metrics: dict, objective: str) -> np.ndarray:
    if objective == "smooth":
        return metrics["length"] + metrics["smooth"]
    if objective == "exact":
        return metrics["length"] + metrics["exact"]
    if objective == "chomp":
        return metrics["length"] + metrics["chomp"]
    raise OracleError(f"unknown objective {objective!r}; pick one of {OBJECTIVES}")


@dataclass(frozen=True)
class BruteForceResult:
    objective: str
    grid: GridSpec
    values: np.ndarray   # (resolution, resolution), x index first
    lengths: np.ndarray  # length component on the same grid
    best_index: tuple
    best_anchor: np.ndarray
    best_cost: float
    best_length: float
    best_exact: float
    best_collides: bool

    def quantization_slack(self, safety: float = 2.0) -> float:
        """Cost slack attributable to the grid: local Lipschitz times cell size.

        Estimated on the length landscape (the continuous cost component;
        collision terms jump at obstacle boundaries and would poison a
        finite-difference slope), from the steepest difference toward the
        neighbors of the optimal cell.
        """
        i, j = self.best_index
        r = self.grid.resolution
        dx, dy = self.grid.spacing
        best = self.lengths[i, j]
        steepest = 0.0
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                ni, nj = i + di, j + dj
                if 0 <= ni < r and 0 <= nj < r:
                    run = float(np.hypot(di * dx, dj * dy))
                    steepest = max(steepest, abs(self.lengths[ni, nj] - best) / run)
        return safety * steepest * self.grid.cell_diagonal


def brute_force_optimum(
    problem: PlanningProblem,
    cost_params: CostParams,
    grid: GridSpec,
    *,
    degree: int = 2,
    objective: str = "smooth",
    chomp_params: ChompParams | None = None,
) -> BruteForceResult:
    """Exhaustive search of the one-anchor family over the grid.

    Ties break to the lexicographically smallest cell index.  The full
    value grid comes back for landscape rendering and slack estimation.
    """
    if objective == "chomp" and chomp_params is None:
        raise OracleError("the baseline objective needs its parameters")
    nodes = grid.nodes()
    metrics = anchor_batch_metrics(
        problem, cost_params, nodes, degree=degree, chomp_params=chomp_params
    )
    values = _objective_values(metrics, objective)
    flat_best = int(np.argmin(values))
    r = grid.resolution
    index = (flat_best // r, flat_best % r)
    return BruteForceResult(
        objective=objective,
        grid=grid,
        values=values.reshape(r, r),
        lengths=metrics["length"].reshape(r, r),
        best_index=index,
        best_anchor=nodes[flat_best],
        best_cost=float(values[flat_best]),
        best_length=float(metrics["length"][flat_best]),
        best_exact=float(metrics["exact"][flat_best]),
        best_collides=bool(metrics["collides"][flat_best]),
    )


def verify_properties(
    problem: PlanningProblem,
    optimum: BruteForceResult,
    cost_params: CostParams,
    trials: int,
    seed: int,
    *,
    degree: int = 2,
) -> dict:
    """Check the three collision-penalty conditions on random one-anchor paths.

    ``optimum`` must come from the exact-indicator objective.  For each of
    ``trials`` anchors drawn uniformly over the scene bounds: the optimum's
    collision cost never exceeds the trial's; collision flags match nonzero
    collision cost exactly; and any length the trial saves over the optimum
    is covered by its collision cost, up to grid-quantization slack.
    """
    if optimum.objective != "exact":
        raise OracleError("property verification needs the exact-indicator optimum")
    scene = problem.scene
    rng = np.random.default_rng(seed)
    anchors = rng.uniform(scene.bounds_min, scene.bounds_max, size=(trials, 2))
    metrics = anchor_batch_metrics(problem, cost_params, anchors, degree=degree)
    opt = anchor_batch_metrics(
        problem, cost_params, optimum.best_anchor[None, :], degree=degree
    )
    opt_exact = float(opt["exact"][0])
    opt_length = float(opt["length"][0])
    slack = optimum.quantization_slack()
    mp_violations = int(np.sum(opt_exact > metrics["exact"] + 1e-12))
    np_violations = int(np.sum(metrics["collides"] != (metrics["exact"] > 0.0)))
    gp_violations = int(
        np.sum(opt_length - metrics["length"] > metrics["exact"] + slack)
    )
    return {
        "trials": int(trials),
        "seed": int(seed),
        "mp_violations": mp_violations,
        "np_violations": np_violations,
        "gp_violations": gp_violations,
        "slack": slack,
        "optimum_length": opt_length,
        "optimum_exact": opt_exact,
        "optimum_collides": bool(opt["collides"][0]),
    }


def cost_heatmap(
    problem: PlanningProblem,
    objective: str,
    grid: GridSpec,
    cost_params: CostParams,
    *,
    degree: int = 2,
    chomp_params: ChompParams | None = None,
) -> dict:
    """Raster of the chosen objective over anchor positions.

    Returns the value matrix (x index first) with its min and max, ready
    for color mapping.
    """
    result = brute_force_optimum(
        problem,
        cost_params,
        grid,
        degree=degree,
        objective=objective,
        chomp_params=chomp_params,
    )
    return {
        "objective": objective,
        "values": result.values,
        "vmin": float(result.values.min()),
        "vmax": float(result.values.max()),
        "grid": grid,
        "best_anchor": result.best_anchor,
    }


# raster dumps -------------------------------------------------------------------


def raster_to_pgm(values: np.ndarray, path: str) -> None:
    """Plain-text grayscale dump, low values dark, high values bright."""
    values = np.asarray(values, dtype=float)
    vmin, vmax = float(values.min()), float(values.max())
    span = vmax - vmin if vmax > vmin else 1.0
    levels = np.rint((values - vmin) / span * 255.0).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{values.shape[1]} {values.shape[0]}\n255\n")
        for row in levels:
            fh.write(" ".join(str(v) for v in row) + "\n")


def raster_to_json(values: np.ndarray, path: str) -> None:
    values = np.asarray(values, dtype=float)
    payload = {
        "shape": list(values.shape),
        "vmin": float(values.min()),
        "vmax": float(values.max()),
        "values": values.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
