"""Gradient-based collision-free shortest-path planning over rational splines.

The cost of a path is its polyline length plus, per crossed obstacle, the
obstacle's bounding-circle circumference.  That penalty makes detours
always cheaper than cut-throughs, so cost minima are collision-free
shortest paths with no trade-off weight to tune.  The package provides the
cost and its smooth differentiable bound, a direct spline optimizer, an
unsupervised path-regression network, a clearance-cost baseline, and a
brute-force oracle that verifies the optimality guarantees empirically.
"""

from .cost import ChompParams, CostBreakdown, CostParams, total_loss
from .geom import Box, PlanningProblem, Scene, Sphere
from .optimizer import OptimizerConfig, PlanResult, optimize_path, refine_collision_only
from .spline import SplinePath, sample_path, straight_line_spline

__all__ = [
    "Box",
    "ChompParams",
    "CostBreakdown",
    "CostParams",
    "OptimizerConfig",
    "PlanningProblem",
    "PlanResult",
    "Scene",
    "Sphere",
    "SplinePath",
    "optimize_path",
    "refine_collision_only",
    "sample_path",
    "straight_line_spline",
    "total_loss",
]
